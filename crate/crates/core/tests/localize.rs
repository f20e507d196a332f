use c2nlos::forward::{simulate_sinogram, Scatterer, Scene, TimeAxis, Transient, TransientSinogram};
use c2nlos::geometry::{point_to_sinusoid, wrap_angle, CartesianPoint, ScanCircle, SPEED_OF_LIGHT};
use c2nlos::localize::{
    hough_accumulate, localize, localize_volume, prepare_sinogram, trilaterate, HoughVolume, LocalizeConfig,
};
use c2nlos::Error;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

const ANGLES: usize = 180;

fn setup() -> (ScanCircle, TimeAxis, LocalizeConfig) {
    let circle = ScanCircle::centered(0.5, ANGLES).unwrap();
    let time = TimeAxis::for_range(4.0, 1024).unwrap();
    let config = LocalizeConfig { v_window: Some((0.5, 4.5)), num_v: 128, ..Default::default() };
    (circle, time, config)
}

fn sino(points: &[CartesianPoint], circle: &ScanCircle, time: &TimeAxis) -> TransientSinogram {
    let scene = Scene::points(points.iter().map(|&p| Scatterer::new(p, 1.0)).collect()).unwrap();
    simulate_sinogram(&scene, circle, time).unwrap()
}

fn argmax(vol: &HoughVolume) -> (usize, usize, usize) {
    vol.data.indexed_iter().fold(((0, 0, 0), f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b }).0
}

/// Fractional (amplitude, phase, offset) bin of a point's sinusoid.
fn expected_bins(p: &CartesianPoint, vol: &HoughVolume) -> (f64, f64, f64) {
    let s = point_to_sinusoid(p, &vol.circle);
    let (da, db, _) = vol.pitch();
    let phase = wrap_angle(s.phase - PI).rem_euclid(2.0 * PI) / db;
    (s.amplitude / da, phase, vol.v_axis.position(s.offset))
}

fn phase_gap(a: f64, b: f64, n: usize) -> f64 {
    let d = (a - b).rem_euclid(n as f64);
    d.min(n as f64 - d)
}

fn random_point(rng: &mut ChaCha8Rng) -> CartesianPoint {
    let rho = rng.random_range(0.2..0.45);
    let phi = rng.random_range(0.0..2.0 * PI);
    CartesianPoint::new(rho * phi.cos(), rho * phi.sin(), rng.random_range(0.8..1.6))
}

#[test]
fn global_maximum_sits_at_the_true_parameters() {
    let (circle, time, config) = setup();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let p = random_point(&mut rng);
        let (vol, _) = localize_volume(&sino(&[p], &circle, &time), &config).unwrap();
        let (ia, ib, ig) = argmax(&vol);
        let (ea, eb, eg) = expected_bins(&p, &vol);
        assert!((ia as f64 - ea).abs() <= 1.0, "amplitude bin {ia} vs {ea}");
        assert!(phase_gap(ib as f64, eb, ANGLES) <= 1.0, "phase bin {ib} vs {eb}");
        assert!((ig as f64 - eg).abs() <= 1.0, "offset bin {ig} vs {eg}");
    }
}

#[test]
fn votes_are_linear_in_the_measurement() {
    let (circle, time, config) = setup();
    let a = prepare_sinogram(&sino(&[CartesianPoint::new(0.3, 0.1, 1.0)], &circle, &time), &config).unwrap();
    let b = prepare_sinogram(&sino(&[CartesianPoint::new(-0.2, 0.25, 1.3)], &circle, &time), &config).unwrap();
    let mut ab = a.clone();
    ab.data = &a.data * 2.0 + &b.data;
    let amps: Vec<f64> = (0..20).map(|i| i as f64 * 0.03).collect();
    let (ha, hb, hab) = (
        hough_accumulate(&a, &amps).unwrap(),
        hough_accumulate(&b, &amps).unwrap(),
        hough_accumulate(&ab, &amps).unwrap(),
    );
    let scale = hab.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for ((x, y), z) in ha.data.iter().zip(hb.data.iter()).zip(hab.data.iter()) {
        assert!((2.0 * x + y - z).abs() <= 1e-9 * scale);
    }
}

#[test]
fn rotating_the_scene_shifts_the_phase() {
    let (circle, time, config) = setup();
    let p = CartesianPoint::new(0.32, -0.12, 1.1);
    let shift = 20;
    let d = shift as f64 * circle.angle_step();
    let q = CartesianPoint::new(p.x * d.cos() - p.y * d.sin(), p.x * d.sin() + p.y * d.cos(), p.z);
    let (va, _) = localize_volume(&sino(&[p], &circle, &time), &config).unwrap();
    let (vb, _) = localize_volume(&sino(&[q], &circle, &time), &config).unwrap();
    let (a, b) = (argmax(&va), argmax(&vb));
    assert!(a.0.abs_diff(b.0) <= 1 && a.2.abs_diff(b.2) <= 1);
    assert!(phase_gap(b.1 as f64, (a.1 + shift) as f64, ANGLES) <= 1.0);
}

#[test]
fn noisy_peak_stays_within_the_suppression_box() {
    let (circle, time, config) = setup();
    let p = CartesianPoint::new(-0.25, 0.3, 1.2);
    let clean = sino(&[p], &circle, &time);
    let peak = clean.data.iter().fold(0.0f64, |m, &v| m.max(v));
    // peak SNR of about 10 under Poisson statistics
    let noisy = clean.add_poisson_noise(100.0 / peak, 0.05, 5).unwrap();
    let (vc, _) = localize_volume(&clean, &config).unwrap();
    let (vn, _) = localize_volume(&noisy, &config).unwrap();
    let (a, b) = (argmax(&vc), argmax(&vn));
    let r = config.suppression_radius;
    assert!(a.0.abs_diff(b.0) <= r.0, "{a:?} vs {b:?}");
    assert!(phase_gap(a.1 as f64, b.1 as f64, ANGLES) <= r.1 as f64);
    assert!(a.2.abs_diff(b.2) <= r.2);
}

#[test]
fn three_scatterers_are_resolved() {
    let (circle, time, config) = setup();
    let pts = [
        CartesianPoint::new(0.3, 0.0, 0.9),
        CartesianPoint::new(-0.2, 0.3, 1.25),
        CartesianPoint::new(0.05, -0.4, 1.55),
    ];
    let (vol, _) = localize_volume(&sino(&pts, &circle, &time), &config).unwrap();
    let dets = localize(&sino(&pts, &circle, &time), 3, &config).unwrap();
    assert_eq!(dets.len(), 3);
    let (da, db, _) = vol.pitch();
    for p in &pts {
        let (ea, eb, eg) = expected_bins(p, &vol);
        let hit = dets.iter().any(|d| {
            let s = d.params;
            let b = wrap_angle(s.phase - PI).rem_euclid(2.0 * PI) / db;
            (s.amplitude / da - ea).abs() <= 2.0
                && phase_gap(b, eb, ANGLES) <= 2.0
                && (vol.v_axis.position(s.offset) - eg).abs() <= 2.0
        });
        assert!(hit, "no detection near {p:?}: {dets:?}");
    }
}

#[test]
fn trilateration_recovers_exact_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let circle = ScanCircle::centered(rng.random_range(0.2..1.0), 360).unwrap();
        let ks = [0, rng.random_range(60..180), rng.random_range(200..340)];
        let pts = ks.map(|k| circle.point(k));
        let p = CartesianPoint::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(0.3..2.0));
        let times = pts.map(|q| 2.0 * p.distance(&q) / SPEED_OF_LIGHT);
        let est = trilaterate(times, pts).unwrap();
        assert!(est.distance(&p) < 1e-9);
    }
}

#[test]
fn failure_modes() {
    let (circle, time, config) = setup();
    let empty = TransientSinogram {
        data: Array2::zeros((0, 16)),
        circle,
        axis: c2nlos::forward::TransientAxis::Time(time),
    };
    assert!(matches!(localize(&empty, 1, &config), Err(Error::EmptySinogram)));
    let silent = TransientSinogram { data: Array2::zeros((ANGLES, 1024)), circle, axis: empty.axis };
    assert!(matches!(localize(&silent, 1, &config), Err(Error::InsufficientPeaks { .. })));
    let one = sino(&[CartesianPoint::new(0.3, 0.0, 1.0)], &circle, &time);
    assert!(matches!(localize(&one, 0, &config), Err(Error::InvalidInput(_))));
    let wide = LocalizeConfig { v_window: Some((1.0, 40.0)), ..config };
    assert!(matches!(localize(&one, 1, &wide), Err(Error::WindowOutOfRange { .. })));
    let v = one.resample_to_v().unwrap();
    assert!(matches!(localize(&v, 1, &wide), Err(Error::WindowOutOfRange { .. })));

    let pts = [CartesianPoint::new(0.0, 0.0, 0.0), CartesianPoint::new(1.0, 0.0, 0.0), CartesianPoint::new(0.0, 1.0, 0.0)];
    let t = |d: f64| 2.0 * d / SPEED_OF_LIGHT;
    assert!(matches!(trilaterate([t(0.1), t(0.1), t(0.1)], pts), Err(Error::NoIntersection { .. })));
    let line = [pts[0], pts[1], CartesianPoint::new(2.0, 0.0, 0.0)];
    assert!(matches!(trilaterate([t(1.0), t(1.0), t(1.5)], line), Err(Error::CollinearPoints)));
    assert!(trilaterate([0.0, t(1.0), t(1.0)], pts).is_err());
}
