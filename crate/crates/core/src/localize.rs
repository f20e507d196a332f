//! Scatterer localization by FFT-based Hough voting over sinusoid templates,
//! plus the three-point trilateration baseline.

use std::cmp::Ordering;
use std::f64::consts::PI;

use ndarray::{s, Array2, Array3, Axis};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{fft2, fft_axis2, plan_1d, Direction};
use crate::forward::{Transient, TransientAxis, TransientSinogram, VAxis};
use crate::geometry::{sinusoid_to_point, wrap_angle, CartesianPoint, ScanCircle, SinusoidParams, SPEED_OF_LIGHT};

/// Binary template `T(theta, v) = 1` where `v = round(alpha cos(theta) + N/2)`,
/// laid out `[angle][v]`. `alpha` is in v-bins.
pub fn hough_kernel(alpha: f64, num_angles: usize, num_v: usize) -> Array2<f64> {
    let mut t = Array2::<f64>::zeros((num_angles, num_v));
    for (k, row) in kernel_rows(alpha, num_angles, num_v).into_iter().enumerate() {
        if let Some(v) = row {
            t[[k, v]] = 1.0;
        }
    }
    t
}

fn kernel_rows(alpha: f64, num_angles: usize, num_v: usize) -> Vec<Option<usize>> {
    (0..num_angles)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / num_angles as f64;
            let v = (alpha * theta.cos() + (num_v / 2) as f64).round();
            (v >= 0.0 && (v as usize) < num_v).then_some(v as usize)
        })
        .collect()
}

/// Vote scores `data[[amplitude, phase, offset]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HoughVolume {
    pub data: Array3<f64>,
    /// Candidate amplitudes in m^2.
    pub amplitudes: Vec<f64>,
    /// Offset (gamma) axis; identical to the voting sinogram's v axis.
    pub v_axis: VAxis,
    pub circle: ScanCircle,
}

impl HoughVolume {
    pub fn params_at(&self, ia: usize, ib: usize, ig: usize) -> SinusoidParams {
        SinusoidParams::new(
            self.amplitudes[ia],
            wrap_angle(self.circle.angle(ib) + PI),
            self.v_axis.value(ig),
        )
    }

    /// Pitch of one bin along (amplitude m^2, phase rad, offset m^2).
    pub fn pitch(&self) -> (f64, f64, f64) {
        let da = if self.amplitudes.len() > 1 { self.amplitudes[1] - self.amplitudes[0] } else { self.v_axis.bin_width };
        (da, self.circle.angle_step(), self.v_axis.bin_width)
    }
}

/// Amplitude grid: `0, dv, 2 dv, ...` up to `max_amplitude`, at most `N/2` bins.
pub fn amplitude_grid(v_axis: &VAxis, max_amplitude: Option<f64>) -> Vec<f64> {
    let cap = v_axis.num_bins / 2;
    let n = match max_amplitude {
        Some(m) => ((m / v_axis.bin_width).floor().max(0.0) as usize).min(cap),
        None => cap.saturating_sub(1),
    };
    (0..=n).map(|i| i as f64 * v_axis.bin_width).collect()
}

/// Cross-correlates each amplitude template with a v-axis sinogram. The
/// correlation is circular in angle and zero-padded in v.
pub fn hough_accumulate(sino: &TransientSinogram, amplitudes: &[f64]) -> Result<HoughVolume> {
    let v_axis = *sino.v_axis()?;
    let (na, nv) = sino.data.dim();
    let nv2 = 2 * nv;

    let mut spec = Array2::<Complex64>::zeros((na, nv2));
    spec.slice_mut(s![.., ..nv]).zip_mut_with(&sino.data, |c, &v| c.re = v);
    fft2(&mut spec, Direction::Forward);

    let angle_fft = plan_1d(na, Direction::Forward);
    let inv_v = plan_1d(nv2, Direction::Inverse);
    let inv_a = plan_1d(na, Direction::Inverse);
    let norm = 1.0 / (na * nv2) as f64;
    let half = nv / 2;

    let slices: Vec<Array2<f64>> = amplitudes
        .par_iter()
        .map(|&alpha| {
            // template spectrum: analytic along v, FFT along angle
            let rows = kernel_rows(alpha / v_axis.bin_width, na, nv);
            let mut t = Array2::<Complex64>::zeros((na, nv2));
            for (k, row) in rows.iter().enumerate() {
                if let Some(v) = row {
                    for j in 0..nv2 {
                        let ph = -2.0 * PI * ((j * v) % nv2) as f64 / nv2 as f64;
                        t[[k, j]] = Complex64::from_polar(1.0, ph);
                    }
                }
            }
            fft_axis2(&mut t, 0, &angle_fft);
            t.zip_mut_with(&spec, |a, &b| *a = a.conj() * b);
            fft_axis2(&mut t, 1, &inv_v);
            fft_axis2(&mut t, 0, &inv_a);
            // offset bin g corresponds to lag g - N/2 (mod 2N)
            Array2::from_shape_fn((na, nv), |(b, g)| t[[b, (g + nv2 - half) % nv2]].re * norm)
        })
        .collect();

    let mut data = Array3::<f64>::zeros((amplitudes.len(), na, nv));
    for (i, sl) in slices.into_iter().enumerate() {
        data.index_axis_mut(Axis(0), i).assign(&sl);
    }
    Ok(HoughVolume { data, amplitudes: amplitudes.to_vec(), v_axis, circle: sino.circle })
}

/// A local maximum of the Hough volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub index: (usize, usize, usize),
    pub params: SinusoidParams,
    pub score: f64,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m
}

fn is_local_max(vol: &Array3<f64>, ia: usize, ib: usize, ig: usize) -> bool {
    let (na, nb, ng) = vol.dim();
    let c = vol[[ia, ib, ig]];
    for da in -1i64..=1 {
        let a = ia as i64 + da;
        if a < 0 || a >= na as i64 {
            continue;
        }
        for db in -1i64..=1 {
            let b = (ib as i64 + db).rem_euclid(nb as i64) as usize;
            for dg in -1i64..=1 {
                let g = ig as i64 + dg;
                if g < 0 || g >= ng as i64 || (da == 0 && db == 0 && dg == 0) {
                    continue;
                }
                if vol[[a as usize, b, g as usize]] > c {
                    return false;
                }
            }
        }
    }
    true
}

/// Picks the `k` strongest local maxima above `floor_factor x median` after
/// greedy box suppression. Ties go to the lowest offset (nearest scatterer).
pub fn find_peaks(
    vol: &HoughVolume,
    k: usize,
    radius: (usize, usize, usize),
    floor_factor: f64,
) -> Result<Vec<Peak>> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let data = &vol.data;
    let (_, nb, ng) = data.dim();
    let floor = floor_factor * median(data.as_slice().expect("standard layout"));

    let mut cands: Vec<(usize, usize, usize, f64)> = data
        .axis_iter(Axis(0))
        .into_par_iter()
        .enumerate()
        .flat_map_iter(|(ia, slab)| {
            let mut out = Vec::new();
            for ib in 0..nb {
                let row = slab.row(ib);
                for ig in 0..ng {
                    let c = row[ig];
                    if !(c > floor) || (ig > 0 && row[ig - 1] > c) || (ig + 1 < ng && row[ig + 1] > c) {
                        continue;
                    }
                    if is_local_max(data, ia, ib, ig) {
                        out.push((ia, ib, ig, c));
                    }
                }
            }
            out
        })
        .collect();
    cands.sort_by(|a, b| match b.3.partial_cmp(&a.3).unwrap_or(Ordering::Equal) {
        Ordering::Equal => (a.2, a.0, a.1).cmp(&(b.2, b.0, b.1)),
        o => o,
    });

    let mut peaks: Vec<Peak> = Vec::with_capacity(k);
    for (ia, ib, ig, score) in cands {
        let suppressed = peaks.iter().any(|p| {
            let (pa, pb, pg) = p.index;
            let db = (pb as i64 - ib as i64).rem_euclid(nb as i64) as usize;
            pa.abs_diff(ia) <= radius.0 && db.min(nb - db) <= radius.1 && pg.abs_diff(ig) <= radius.2
        });
        if !suppressed {
            peaks.push(Peak { index: (ia, ib, ig), params: vol.params_at(ia, ib, ig), score });
            if peaks.len() == k {
                break;
            }
        }
    }
    if peaks.len() < k {
        return Err(Error::InsufficientPeaks { found: peaks.len(), requested: k });
    }
    Ok(peaks)
}

/// Hough localization settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizeConfig {
    /// Offset search window in m^2; defaults to the sinogram's full v range.
    pub v_window: Option<(f64, f64)>,
    /// Offset bins used when resampling a time-axis sinogram.
    pub num_v: usize,
    /// Largest candidate amplitude in m^2; defaults to `N/2` bins.
    pub max_amplitude: Option<f64>,
    /// Suppression box half-widths in (amplitude, phase, offset) bins.
    pub suppression_radius: (usize, usize, usize),
    /// Keep the `v^{3/2}` factor of the resampled measurement during voting.
    pub radiometric_weighting: bool,
    /// Subtract each angle's median before voting.
    pub median_subtract: bool,
    pub score_floor_factor: f64,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        Self {
            v_window: None,
            num_v: 256,
            max_amplitude: None,
            suppression_radius: (4, 8, 8),
            radiometric_weighting: true,
            median_subtract: true,
            score_floor_factor: 3.0,
        }
    }
}

/// One localized scatterer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub params: SinusoidParams,
    pub position: CartesianPoint,
    pub score: f64,
}

/// Brings a sinogram onto the voting v grid and applies the preprocessing.
pub fn prepare_sinogram(sino: &TransientSinogram, config: &LocalizeConfig) -> Result<TransientSinogram> {
    let mut out = match sino.axis {
        TransientAxis::Time(time) => {
            let v_axis = match config.v_window {
                Some((lo, hi)) => {
                    let max = time.max_range().powi(2);
                    if !(lo >= 0.0 && hi > lo && hi <= max) {
                        return Err(Error::WindowOutOfRange { lo, hi, min: 0.0, max });
                    }
                    VAxis::spanning(lo, hi, config.num_v)?
                }
                None => time.v_axis(config.num_v),
            };
            sino.resample_to_v_with(v_axis)?
        }
        TransientAxis::SquaredRange(v) => match config.v_window {
            Some((lo, hi)) => {
                let max = v.v_last();
                let j0 = v.position(lo).ceil();
                let j1 = v.position(hi).floor();
                if !(lo >= v.v_min && hi <= max && j1 > j0) {
                    return Err(Error::WindowOutOfRange { lo, hi, min: v.v_min, max });
                }
                let (j0, j1) = (j0 as usize, j1 as usize);
                TransientSinogram {
                    data: sino.data.slice(s![.., j0..=j1]).to_owned(),
                    circle: sino.circle,
                    axis: TransientAxis::SquaredRange(VAxis::new(j1 - j0 + 1, v.value(j0), v.bin_width)?),
                }
            }
            None => sino.clone(),
        },
    };
    if out.data.iter().all(|&v| v == 0.0) {
        return Ok(out);
    }
    let v_axis = *out.v_axis()?;
    if !config.radiometric_weighting {
        for mut row in out.data.rows_mut() {
            for (j, x) in row.iter_mut().enumerate() {
                let v = v_axis.value(j);
                *x = if v > 0.0 { *x / v.powf(1.5) } else { 0.0 };
            }
        }
    }
    if config.median_subtract {
        for mut row in out.data.rows_mut() {
            let m = median(row.as_slice().expect("row"));
            row.mapv_inplace(|x| x - m);
        }
    }
    Ok(out)
}

/// Full pipeline: resample, vote, pick peaks, convert to positions.
pub fn localize(sino: &TransientSinogram, k: usize, config: &LocalizeConfig) -> Result<Vec<Detection>> {
    let (vol, _) = localize_volume(sino, config)?;
    detections_from_volume(&vol, k, config)
}

/// Prepared sinogram and its Hough volume.
pub fn localize_volume(sino: &TransientSinogram, config: &LocalizeConfig) -> Result<(HoughVolume, TransientSinogram)> {
    if sino.data.is_empty() {
        return Err(Error::EmptySinogram);
    }
    let prepared = prepare_sinogram(sino, config)?;
    let amps = amplitude_grid(prepared.v_axis()?, config.max_amplitude);
    let vol = hough_accumulate(&prepared, &amps)?;
    Ok((vol, prepared))
}

pub fn detections_from_volume(vol: &HoughVolume, k: usize, config: &LocalizeConfig) -> Result<Vec<Detection>> {
    let peaks = find_peaks(vol, k, config.suppression_radius, config.score_floor_factor)?;
    let rp = vol.circle.radius;
    peaks
        .into_iter()
        .map(|p| {
            let mut params = p.params;
            let r = (params.offset - rp * rp).max(0.0).sqrt();
            params.amplitude = params.amplitude.min(2.0 * r * rp);
            Ok(Detection { params, position: sinusoid_to_point(&params, &vol.circle)?, score: p.score })
        })
        .collect()
}

fn cross(a: &CartesianPoint, b: &CartesianPoint) -> CartesianPoint {
    CartesianPoint::new(a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x)
}

fn dot(a: &CartesianPoint, b: &CartesianPoint) -> f64 {
    a.x * b.x + a.y * b.y + a.z * b.z
}

fn scale(a: &CartesianPoint, s: f64) -> CartesianPoint {
    CartesianPoint::new(a.x * s, a.y * s, a.z * s)
}

/// Intersects the spheres of radius `t_i c / 2` about `points`, returning the
/// root with `z >= 0`.
pub fn trilaterate(peak_times: [f64; 3], points: [CartesianPoint; 3]) -> Result<CartesianPoint> {
    if peak_times.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidInput("peak times must be positive".into()));
    }
    let [r1, r2, r3] = peak_times.map(|t| t * SPEED_OF_LIGHT / 2.0);
    let [p1, p2, p3] = points;
    let d_vec = p2.sub(&p1);
    let d = d_vec.norm();
    let span = d.max(p3.sub(&p1).norm()).max(f64::MIN_POSITIVE);
    if d <= 1e-12 * span {
        return Err(Error::CollinearPoints);
    }
    let ex = scale(&d_vec, 1.0 / d);
    let q = p3.sub(&p1);
    let i = dot(&ex, &q);
    let ey_raw = q.sub(&scale(&ex, i));
    let j = ey_raw.norm();
    if j <= 1e-12 * span {
        return Err(Error::CollinearPoints);
    }
    let ey = scale(&ey_raw, 1.0 / j);
    let ez = cross(&ex, &ey);

    let x = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
    let y = (r1 * r1 - r3 * r3 + i * i + j * j) / (2.0 * j) - i * x / j;
    let z_sq = r1 * r1 - x * x - y * y;
    let base = p1.add(&scale(&ex, x)).add(&scale(&ey, y));
    if z_sq < 0.0 {
        return Err(Error::NoIntersection { point: base, residual: (-z_sq).sqrt() });
    }
    let z = z_sq.sqrt();
    let a = base.add(&scale(&ez, z));
    let b = base.sub(&scale(&ez, z));
    Ok(if a.z >= b.z { a } else { b })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_shapes() {
        let k0 = hough_kernel(0.0, 16, 32);
        for row in k0.rows() {
            assert_eq!(row.sum(), 1.0);
            assert_eq!(row[16], 1.0);
        }
        let k = hough_kernel(8.0, 64, 32);
        let rows: Vec<usize> = k.rows().into_iter().map(|r| r.iter().position(|&v| v == 1.0).unwrap()).collect();
        assert_eq!(*rows.iter().min().unwrap(), 8);
        assert_eq!(*rows.iter().max().unwrap(), 24);
        assert!(k.rows().into_iter().all(|r| r.sum() == 1.0));
    }

    fn impulse_volume(points: &[((usize, usize, usize), f64)]) -> HoughVolume {
        let mut data = Array3::<f64>::zeros((10, 36, 64));
        for &(i, v) in points {
            data[[i.0, i.1, i.2]] = v;
        }
        HoughVolume {
            data,
            amplitudes: (0..10).map(|i| i as f64 * 0.1).collect(),
            v_axis: VAxis::new(64, 1.0, 0.1).unwrap(),
            circle: ScanCircle::centered(0.5, 36).unwrap(),
        }
    }

    #[test]
    fn peaks_single_and_pair() {
        let v = impulse_volume(&[((3, 5, 20), 1.0)]);
        let p = find_peaks(&v, 1, (4, 8, 8), 3.0).unwrap();
        assert_eq!(p[0].index, (3, 5, 20));
        let v = impulse_volume(&[((3, 5, 20), 1.0), ((7, 30, 50), 2.0)]);
        let p = find_peaks(&v, 2, (4, 8, 8), 3.0).unwrap();
        assert_eq!(p[0].index, (7, 30, 50));
        assert_eq!(p[1].index, (3, 5, 20));
        assert!(matches!(find_peaks(&v, 3, (4, 8, 8), 3.0), Err(Error::InsufficientPeaks { found: 2, requested: 3 })));
    }

    #[test]
    fn peak_ties_prefer_nearest() {
        let v = impulse_volume(&[((3, 5, 40), 1.0), ((3, 20, 10), 1.0)]);
        let p = find_peaks(&v, 1, (4, 8, 8), 3.0).unwrap();
        assert_eq!(p[0].index.2, 10);
    }

    #[test]
    fn trilateration_exact_and_collinear() {
        let pts = [
            CartesianPoint::new(0.3, 0.0, 0.0),
            CartesianPoint::new(-0.2, 0.4, 0.0),
            CartesianPoint::new(-0.1, -0.5, 0.0),
        ];
        let target = CartesianPoint::new(0.12, -0.31, 1.7);
        let times = pts.map(|p| 2.0 * p.distance(&target) / SPEED_OF_LIGHT);
        let got = trilaterate(times, pts).unwrap();
        assert!(got.distance(&target) < 1e-9);
        let line = [CartesianPoint::new(0.0, 0.0, 0.0), CartesianPoint::new(1.0, 0.0, 0.0), CartesianPoint::new(2.0, 0.0, 0.0)];
        assert!(matches!(trilaterate([1e-8; 3], line), Err(Error::CollinearPoints)));
        let far = [1e-10, 1e-10, 1e-8];
        assert!(matches!(trilaterate(far, pts), Err(Error::NoIntersection { .. })));
    }
}
