use c2nlos::fft::{Direction, Fft3};
use c2nlos::forward::{simulate_confocal, ConfocalTransient, Scene, TimeAxis, Transient, VAxis, WallGrid};
use c2nlos::recon3d::{
    admm_reconstruct_confocal, admm_solve, AdmmParams, LctOperator, SamplingMask, VoxelVolume,
};
use c2nlos::Error;
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

fn ncc(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        da += (x - ma).powi(2);
        db += (y - mb).powi(2);
    }
    num / (da * db).sqrt()
}

fn flat(ct: &ConfocalTransient) -> Array2<f64> {
    let (ny, nx, nv) = ct.data.dim();
    ct.data.clone().into_shape_with_order((ny * nx, nv)).unwrap()
}

/// `[v][y][x]` operator output as `[scan point][v]` rows.
fn rows_of(tau: &Array3<f64>) -> Array2<f64> {
    let (nv, ny, nx) = tau.dim();
    tau.view().into_shape_with_order((nv, ny * nx)).unwrap().t().as_standard_layout().into_owned()
}

struct DeltaSetup {
    grid: WallGrid,
    time: TimeAxis,
    v_axis: VAxis,
    vol: VoxelVolume,
    voxel: (usize, usize, usize),
}

fn delta_setup(n: usize, nt: usize, nv: usize) -> DeltaSetup {
    let grid = WallGrid::centered(n, 0.5);
    let time = TimeAxis::for_range(2.0, nt).unwrap();
    let v_axis = time.v_axis(nv);
    let mut vol = VoxelVolume::for_wall(&grid, 16, (0.8, 1.2));
    let voxel = (8, n / 2, n / 2);
    vol.data[[voxel.0, voxel.1, voxel.2]] = 1.0;
    DeltaSetup { grid, time, v_axis, vol, voxel }
}

#[test]
fn lct_delta_matches_resampled_simulation() {
    let s = delta_setup(32, 512, 512);
    let op = LctOperator::for_time_axis(&s.grid, &s.time, &s.v_axis, true).unwrap();
    let lct = op.forward_volume(&s.vol).unwrap();
    let sim = simulate_confocal(&Scene::Volume(s.vol.clone()), &s.grid, &s.time)
        .unwrap()
        .resample_to_v_with(s.v_axis)
        .unwrap();
    assert_eq!(lct.data.dim(), sim.data.dim());
    let (a, b) = (lct.data.as_slice().unwrap(), sim.data.as_slice().unwrap());
    let c = ncc(a, b);
    assert!(c >= 0.95, "ncc {c}");
    let (ma, mb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    assert!((ma - mb).abs() <= 0.05 * mb, "mass {ma} vs {mb}");
}

#[test]
fn single_voxel_reconstructs_at_its_voxel() {
    let s = delta_setup(32, 256, 256);
    let op = LctOperator::for_time_axis(&s.grid, &s.time, &s.v_axis, true).unwrap();
    let meas = simulate_confocal(&Scene::Volume(s.vol.clone()), &s.grid, &s.time)
        .unwrap()
        .resample_to_v_with(s.v_axis)
        .unwrap();
    let params = AdmmParams { max_iters: 100, output_slices: 16, z_range: Some((0.8, 1.2)), ..Default::default() };
    let rec = admm_reconstruct_confocal(&meas, &op, &params).unwrap();
    let (idx, _) = rec
        .volume
        .data
        .indexed_iter()
        .fold(((0, 0, 0), f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    assert_eq!((idx.1, idx.2), (s.voxel.1, s.voxel.2));
    assert!(idx.0.abs_diff(s.voxel.0) <= 1, "depth slice {} vs {}", idx.0, s.voxel.0);
    assert!(rec.volume.data.iter().all(|&v| v >= 0.0));
}

#[test]
fn data_only_admm_matches_spectral_inverse() {
    let grid = WallGrid::centered(16, 0.4);
    let v_axis = VAxis::new(32, 0.5, 0.05).unwrap();
    let op = LctOperator::new(&grid, &v_axis, false).unwrap();
    let shape = op.shape();
    let fft = Fft3::new([shape.0, shape.1, shape.2]);
    let k = op.spectrum();
    let kmax = k.iter().fold(0.0f64, |m, c| m.max(c.norm()));
    let keep = k.mapv(|c| c.norm() >= 0.5 * kmax);

    // band-limited truth restricted to well-conditioned modes
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut spec = Array3::from_shape_fn(shape, |_| Complex64::new(rng.random::<f64>(), 0.0));
    fft.process(&mut spec, Direction::Forward);
    ndarray::Zip::from(&mut spec).and(&keep).for_each(|s, &k| {
        if !k {
            *s = Complex64::new(0.0, 0.0);
        }
    });
    fft.process(&mut spec, Direction::Inverse);
    let truth = spec.mapv(|c| c.re);
    let tau = op.apply(&truth);

    // spectral pseudo-inverse on the kept modes
    let mut t = tau.mapv(|v| Complex64::new(v, 0.0));
    fft.process(&mut t, Direction::Forward);
    ndarray::Zip::from(&mut t).and(k).and(&keep).for_each(|t, &k, &m| {
        *t = if m { *t * k.conj() / k.norm_sqr() } else { Complex64::new(0.0, 0.0) };
    });
    fft.process(&mut t, Direction::Inverse);
    let wiener = t.mapv(|c| c.re);

    let params = AdmmParams {
        lambda_s: 0.0,
        lambda_tv: 0.0,
        nonneg: false,
        max_iters: 3000,
        tol: 0.0,
        ..Default::default()
    };
    let res = admm_solve(rows_of(&tau).view(), &op, None, &params).unwrap();
    let err = (&res.rho_u - &wiener).iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm = wiener.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(err <= 1e-2 * norm, "relative error {}", err / norm);
    let oracle_err = (&wiener - &truth).iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(oracle_err <= 1e-9 * norm);
}

#[test]
fn identity_mask_is_bit_exact() {
    let s = delta_setup(16, 128, 128);
    let op = LctOperator::for_time_axis(&s.grid, &s.time, &s.v_axis, true).unwrap();
    let meas = op.forward_volume(&s.vol).unwrap();
    let tau = flat(&meas);
    let params = AdmmParams { max_iters: 8, ..Default::default() };
    let a = admm_solve(tau.view(), &op, None, &params).unwrap();
    let b = admm_solve(tau.view(), &op, Some(&SamplingMask::identity(&s.grid)), &params).unwrap();
    assert_eq!(a.rho_u, b.rho_u);
    assert_eq!(a.state.objective, b.state.objective);
}

#[test]
fn oversized_step_reports_divergence() {
    let s = delta_setup(16, 128, 128);
    let op = LctOperator::for_time_axis(&s.grid, &s.time, &s.v_axis, true).unwrap();
    let tau = flat(&op.forward_volume(&s.vol).unwrap());
    let params = AdmmParams { nu: Some(1e-3), max_iters: 500, tol: 0.0, ..Default::default() };
    assert!(matches!(admm_solve(tau.view(), &op, None, &params), Err(Error::Diverged { .. })));
}

#[test]
fn mismatched_inputs_are_rejected() {
    let s = delta_setup(16, 128, 128);
    let op = LctOperator::for_time_axis(&s.grid, &s.time, &s.v_axis, true).unwrap();
    let wrong = Array2::<f64>::zeros((10, 128));
    assert!(matches!(admm_solve(wrong.view(), &op, None, &AdmmParams::default()), Err(Error::ShapeMismatch(_))));
    let time_domain = simulate_confocal(&Scene::Volume(s.vol.clone()), &s.grid, &s.time).unwrap();
    assert!(admm_reconstruct_confocal(&time_domain, &op, &AdmmParams::default()).is_err());
    let odd = WallGrid::centered(12, 0.5);
    assert!(LctOperator::for_time_axis(&odd, &s.time, &s.v_axis, true).is_err());
}
