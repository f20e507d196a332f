use c2nlos::forward::{simulate_sinogram, Scatterer, Scene, TimeAxis, Transient, VAxis, WallGrid};
use c2nlos::geometry::{
    angle_distance, cartesian_to_spherical, point_to_sinusoid, sinusoid_to_point, sinusoid_value,
    spherical_to_cartesian, wrap_angle, CartesianPoint, ScanCircle, SphericalPoint,
};
use c2nlos::io::{read_tensor, write_tensor, Tensor};
use c2nlos::metrics::{hungarian, localization_error, ssim};
use c2nlos::recon3d::{
    finite_difference_adjoint, finite_difference_apply, prox_data, prox_l1, prox_nonneg, LctOperator, SamplingMask,
};
use ndarray::{Array2, Array3, ArrayD, IxDyn};
use proptest::prelude::*;
use std::f64::consts::{PI, TAU};

fn dot3(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn array3(n: (usize, usize, usize), vals: &[f64]) -> Array3<f64> {
    Array3::from_shape_fn(n, |(i, j, k)| vals[(i * n.1 * n.2 + j * n.2 + k) % vals.len()])
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn spherical_round_trip(r in 0.05f64..5.0, theta in 0.0f64..PI / 2.0, phi in 0.0f64..TAU) {
        let p = spherical_to_cartesian(&SphericalPoint::new(r, theta, phi));
        let q = cartesian_to_spherical(&p);
        prop_assert!((q.r - r).abs() < 1e-12 * r.max(1.0));
        prop_assert!((q.theta - theta).abs() < 1e-9);
        if theta > 1e-6 {
            prop_assert!(angle_distance(q.phi, phi) < 1e-9);
        }
        let back = spherical_to_cartesian(&q);
        prop_assert!(back.distance(&p) < 1e-12 * r.max(1.0));
    }

    #[test]
    fn sinusoid_round_trip_and_values(
        x in -1.0f64..1.0, y in -1.0f64..1.0, z in 0.1f64..3.0,
        rp in 0.05f64..1.5, cx in -0.3f64..0.3, cy in -0.3f64..0.3, phi in 0.0f64..TAU,
    ) {
        let circle = ScanCircle::new(rp, CartesianPoint::new(cx, cy, 0.0), 64).unwrap();
        let p = CartesianPoint::new(x, y, z);
        let s = point_to_sinusoid(&p, &circle);
        let q = sinusoid_to_point(&s, &circle).unwrap();
        prop_assert!(q.distance(&p) < 1e-9);
        let wall = CartesianPoint::new(cx + rp * phi.cos(), cy + rp * phi.sin(), 0.0);
        let d2 = p.sub(&wall).norm_sq();
        prop_assert!((sinusoid_value(&s, phi) - d2).abs() < 1e-10 * d2.max(1.0));
        let local = circle.to_local(&p);
        let rr = local.norm();
        prop_assert!(s.amplitude <= 2.0 * rr * rp + 1e-12);
        prop_assert!((s.offset - rr * rr - rp * rp).abs() < 1e-12 * s.offset.max(1.0));
    }

    #[test]
    fn amplitude_grows_with_zenith(r in 0.1f64..4.0, rp in 0.1f64..1.0, a in 0.0f64..1.5, b in 0.0f64..1.5) {
        let circle = ScanCircle::centered(rp, 16).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let s = |t: f64| c2nlos::geometry::scatterer_to_sinusoid(&SphericalPoint::new(r, t, 0.3), &circle).amplitude;
        prop_assert!(s(lo) <= s(hi) + 1e-15);
    }

    #[test]
    fn wrapped_angles_stay_in_range(a in -1e4f64..1e4) {
        let w = wrap_angle(a);
        prop_assert!((0.0..TAU).contains(&w));
        prop_assert!(((w - a) / TAU - ((w - a) / TAU).round()).abs() < 1e-9);
    }

    #[test]
    fn proximal_operators(v in -10.0f64..10.0, w in -10.0f64..10.0, tau in -5.0f64..5.0, mu in 0.01f64..10.0, k in 0.0f64..3.0) {
        // each prox is the minimizer of its objective
        let pd = prox_data(v, tau, mu);
        let fd = |x: f64| 0.5 * (x - tau).powi(2) + 0.5 * mu * (x - v).powi(2);
        prop_assert!(fd(pd) <= fd(pd + 1e-4) && fd(pd) <= fd(pd - 1e-4));
        let pl = prox_l1(v, k);
        let fl = |x: f64| k * x.abs() + 0.5 * (x - v).powi(2);
        prop_assert!(fl(pl) <= fl(pl + 1e-4) + 1e-12 && fl(pl) <= fl(pl - 1e-4) + 1e-12);
        prop_assert!(prox_nonneg(v) >= 0.0 && (prox_nonneg(v) == v || v < 0.0));
        // firmly nonexpansive maps are nonexpansive
        prop_assert!((prox_l1(v, k) - prox_l1(w, k)).abs() <= (v - w).abs() + 1e-12);
        prop_assert!((prox_nonneg(v) - prox_nonneg(w)).abs() <= (v - w).abs());
        prop_assert!((prox_data(v, tau, mu) - prox_data(w, tau, mu)).abs() <= (v - w).abs());
    }

    #[test]
    fn difference_operator_adjoint(vals in prop::collection::vec(-1.0f64..1.0, 64), other in prop::collection::vec(-1.0f64..1.0, 64), axis in 0usize..3) {
        let shape = (4, 8, 6);
        let (x, y) = (array3(shape, &vals), array3(shape, &other));
        let lhs = dot3(&finite_difference_apply(&x, axis), &y);
        let rhs = dot3(&x, &finite_difference_adjoint(&y, axis));
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn ssim_is_symmetric_and_reflexive(vals in prop::collection::vec(0.0f64..1.0, 32..256), other in prop::collection::vec(0.0f64..1.0, 256)) {
        // the stability constants follow the reference's range, so pin both to [0, 1]
        let mut a = Array2::from_shape_fn((16, 16), |(r, c)| vals[(r * 16 + c) % vals.len()]);
        let mut b = Array2::from_shape_fn((16, 16), |(r, c)| other[r * 16 + c]);
        for m in [&mut a, &mut b] {
            m[[0, 0]] = 0.0;
            m[[15, 15]] = 1.0;
        }
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let (ab, ba) = (ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab <= 1.0 + 1e-12);
    }

    #[test]
    fn tensor_round_trip_is_bit_exact(vals in prop::collection::vec(any::<f32>(), 24), names in prop::sample::select(vec!["a", "angle", "v"])) {
        let data = ArrayD::from_shape_vec(IxDyn(&[2, 3, 4]), vals).unwrap();
        let t = Tensor::new(data, &[names, "y", "x"], &["rad", "m", "m"]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        write_tensor(&t, &path).unwrap();
        let back = read_tensor(&path).unwrap();
        prop_assert_eq!(&back.header, &t.header);
        let bits = |a: &ArrayD<f32>| a.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back.data), bits(&t.data));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn hungarian_matches_brute_force(n in 1usize..6, vals in prop::collection::vec(0.0f64..10.0, 36)) {
        let cost = Array2::from_shape_fn((n, n), |(i, j)| vals[i * 6 + j]);
        let assign = hungarian(&cost).unwrap();
        let mut seen = vec![false; n];
        for &j in &assign {
            prop_assert!(!seen[j]);
            seen[j] = true;
        }
        let total: f64 = assign.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum();
        let best = permutations(n)
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        prop_assert!((total - best).abs() < 1e-9);
    }

    #[test]
    fn matching_error_ignores_order(pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, 0.1f64..2.0), 2..6), noise in prop::collection::vec(-0.05f64..0.05, 18), shift in 1usize..5) {
        let truth: Vec<CartesianPoint> = pts.iter().map(|&(x, y, z)| CartesianPoint::new(x, y, z)).collect();
        let dets: Vec<CartesianPoint> = truth
            .iter()
            .enumerate()
            .map(|(i, p)| CartesianPoint::new(p.x + noise[3 * i], p.y + noise[3 * i + 1], p.z + noise[3 * i + 2]))
            .collect();
        let mut rotated = dets.clone();
        rotated.rotate_left(shift % dets.len());
        let mut reversed = truth.clone();
        reversed.reverse();
        let a = localization_error(&dets, &truth).unwrap();
        let b = localization_error(&rotated, &reversed).unwrap();
        prop_assert!((a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12 && (a.z - b.z).abs() < 1e-12);
    }

    #[test]
    fn lct_and_mask_adjoints(vals in prop::collection::vec(-1.0f64..1.0, 97), other in prop::collection::vec(-1.0f64..1.0, 89), pad in any::<bool>(), rp in 0.1f64..0.35) {
        let grid = WallGrid::centered(8, 0.4);
        let v_axis = VAxis::new(16, 0.2, 0.05).unwrap();
        let op = LctOperator::new(&grid, &v_axis, pad).unwrap();
        let shape = op.shape();
        let (x, y) = (array3(shape, &vals), array3(shape, &other));
        let lhs = dot3(&op.apply(&x), &y);
        let rhs = dot3(&x, &op.adjoint(&y));
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));

        let mask = SamplingMask::circle(&grid, &ScanCircle::centered(rp, 12).unwrap()).unwrap();
        for k in 0..mask.num_rows() {
            let w: f64 = mask.weights(k).iter().map(|&(_, w)| w).sum();
            prop_assert!((w - 1.0).abs() < 1e-12);
        }
        let samples = Array2::from_shape_fn((shape.0, mask.num_rows()), |(i, j)| other[(i * 7 + j) % other.len()]);
        let l: f64 = mask.apply(&x).iter().zip(samples.iter()).map(|(a, b)| a * b).sum();
        let r = dot3(&x, &mask.adjoint(&samples));
        prop_assert!((l - r).abs() < 1e-10 * (1.0 + l.abs()));
    }

    #[test]
    fn simulation_is_linear_and_resampling_nonnegative(
        pts in prop::collection::vec((-0.5f64..0.5, -0.5f64..0.5, 0.3f64..1.5, 0.0f64..2.0), 1..5),
        gain in 0.1f64..10.0,
    ) {
        let circle = ScanCircle::centered(0.4, 24).unwrap();
        let time = TimeAxis::for_range(3.0, 256).unwrap();
        let mk = |g: f64| Scene::points(pts.iter().map(|&(x, y, z, a)| Scatterer::new(CartesianPoint::new(x, y, z), g * a)).collect()).unwrap();
        let a = simulate_sinogram(&mk(1.0), &circle, &time).unwrap();
        let b = simulate_sinogram(&mk(gain), &circle, &time).unwrap();
        for (x, y) in a.data.iter().zip(b.data.iter()) {
            prop_assert!((gain * x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
        let v = a.resample_to_v_bins(128).unwrap();
        prop_assert!(v.data.iter().all(|&x| x >= 0.0));
    }
}
