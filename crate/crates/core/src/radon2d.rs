//! 2D imaging from a transient sinogram: cropping about a focus sphere,
//! inverse Radon backprojection, refocusing, undistortion, and regularized
//! linear inversion for a plane at known depth.
//!
//! A scatterer on the focus sphere traces `gamma - alpha cos(beta - phi')`.
//! Measured from the window center `s = gamma - v`, every angle row is a
//! parallel projection of a point at `(u, w) = alpha (cos beta, sin beta)`,
//! which equals `2 r' (x, y)`.

use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{plan_1d, Direction};
use crate::forward::{
    simulate_sinogram, ConfocalTransient, Scatterer, Scene, TimeAxis, Transient, TransientSinogram, VAxis,
};
use crate::geometry::{CartesianPoint, ScanCircle};

/// Sinogram rows resampled onto the detector axis `s = gamma_est - v`.
#[derive(Debug, Clone, PartialEq)]
pub struct CroppedSinogram {
    /// `[angle][detector]`, detector sample `i` at `s = (i - (n - 1) / 2) * bin_width`.
    pub data: Array2<f64>,
    pub focus_radius: f64,
    /// Cropped v range in m^2.
    pub window: (f64, f64),
    pub bin_width: f64,
    pub circle: ScanCircle,
}

impl CroppedSinogram {
    pub fn half_width(&self) -> f64 {
        (self.data.ncols() - 1) as f64 / 2.0 * self.bin_width
    }
}

/// Crops to `[(r - r')^2, (r + r')^2]` around `gamma = r^2 + r'^2`.
pub fn crop_sinogram(sino: &TransientSinogram, r_est: f64) -> Result<CroppedSinogram> {
    let rp = sino.circle.radius;
    crop_sinogram_with(sino, r_est, 2.0 * r_est * rp)
}

/// Crops to `[gamma - half_width, gamma + half_width]`.
pub fn crop_sinogram_with(sino: &TransientSinogram, r_est: f64, half_width: f64) -> Result<CroppedSinogram> {
    let v = *sino.v_axis()?;
    if !(r_est > 0.0) || !(half_width > 0.0) {
        return Err(Error::InvalidInput(format!(
            "focus radius and half width must be positive (got {r_est}, {half_width})"
        )));
    }
    let rp = sino.circle.radius;
    let gamma = r_est * r_est + rp * rp;
    let (lo, hi) = (gamma - half_width, gamma + half_width);
    let eps = 1e-9 * v.bin_width;
    if lo < v.v_min - eps || hi > v.v_last() + eps {
        return Err(Error::WindowOutOfRange { lo, hi, min: v.v_min, max: v.v_last() });
    }
    let h = (half_width / v.bin_width + 1e-9).floor() as usize;
    let n = 2 * h + 1;
    let last = v.num_bins - 1;
    let mut data = Array2::<f64>::zeros((sino.data.nrows(), n));
    for (mut out, row) in data.rows_mut().into_iter().zip(sino.data.rows()) {
        for (i, o) in out.iter_mut().enumerate() {
            let s = (i as f64 - h as f64) * v.bin_width;
            let f = v.position(gamma - s).clamp(0.0, last as f64);
            let j = (f.floor() as usize).min(last);
            let a = f - j as f64;
            *o = if j < last { row[j] * (1.0 - a) + row[j + 1] * a } else { row[j] };
        }
    }
    Ok(CroppedSinogram { data, focus_radius: r_est, window: (lo, hi), bin_width: v.bin_width, circle: sino.circle })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadonFilter {
    #[default]
    None,
    RamLak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Radon,
    LinearInversion,
    GridBackprojection,
}

/// Square image `data[[row, col]]`, rows along `w` (y) and columns along `u`
/// (x). Pixel centers span `[-half_extent, half_extent]` in image coordinates;
/// image coordinates are `scale` times plane meters.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneImage {
    pub data: Array2<f64>,
    pub half_extent: f64,
    pub scale: f64,
    pub provenance: Provenance,
}

impl PlaneImage {
    pub fn size(&self) -> usize {
        self.data.nrows()
    }

    /// Pixel pitch in image coordinates.
    pub fn pixel_size(&self) -> f64 {
        2.0 * self.half_extent / self.size() as f64
    }

    /// Pixel pitch in plane meters.
    pub fn pixel_pitch(&self) -> f64 {
        self.pixel_size() / self.scale
    }

    /// Image coordinate of a pixel center index.
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_extent + (i as f64 + 0.5) * self.pixel_size()
    }

    /// Fractional `(col, row)` of an image coordinate.
    pub fn pixel_of(&self, u: f64, w: f64) -> (f64, f64) {
        let p = self.pixel_size();
        ((u + self.half_extent) / p - 0.5, (w + self.half_extent) / p - 0.5)
    }

    /// Image coordinates `(u, w)` of the brightest pixel.
    pub fn argmax(&self) -> (f64, f64) {
        let ((r, c), _) = self
            .data
            .indexed_iter()
            .fold(((0, 0), f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        (self.coord(c), self.coord(r))
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn ram_lak(data: &Array2<f64>, tau: f64) -> Array2<f64> {
    let n = data.ncols();
    let len = (2 * n).next_power_of_two();
    let fwd = plan_1d(len, Direction::Forward);
    let inv = plan_1d(len, Direction::Inverse);
    let mut h = vec![Complex64::default(); len];
    h[0].re = 1.0 / (4.0 * tau * tau);
    for k in (1..n).step_by(2) {
        let v = -1.0 / ((k * k) as f64 * PI * PI * tau * tau);
        h[k].re = v;
        h[len - k].re = v;
    }
    fwd.process(&mut h);
    let mut out = Array2::<f64>::zeros(data.raw_dim());
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(data.axis_iter(Axis(0)))
        .for_each(|(mut o, row)| {
            let mut buf = vec![Complex64::default(); len];
            for (b, &v) in buf.iter_mut().zip(row.iter()) {
                b.re = v;
            }
            fwd.process(&mut buf);
            for (b, k) in buf.iter_mut().zip(&h) {
                *b *= k;
            }
            inv.process(&mut buf);
            for (o, b) in o.iter_mut().zip(&buf) {
                *o = tau * b.re / len as f64;
            }
        });
    out
}

/// Parallel-beam backprojection of the cropped rows onto an
/// `out_size x out_size` image spanning the crop half-width. Pixels outside
/// the inscribed disk of radius half-width are zero.
pub fn inverse_radon(cs: &CroppedSinogram, filter: RadonFilter, out_size: usize) -> Result<PlaneImage> {
    let na = cs.data.nrows();
    if na < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 angles, got {na}")));
    }
    if out_size == 0 {
        return Err(Error::InvalidInput("output size must be positive".into()));
    }
    let proj = match filter {
        RadonFilter::None => cs.data.clone(),
        RadonFilter::RamLak => ram_lak(&cs.data, cs.bin_width),
    };
    let n = proj.ncols();
    let h = (n - 1) as f64 / 2.0;
    let trig: Vec<(f64, f64)> = (0..na).map(|k| cs.circle.angle(k).sin_cos()).collect();
    let mut img = PlaneImage {
        data: Array2::zeros((out_size, out_size)),
        half_extent: cs.half_width(),
        scale: 2.0 * cs.circle.radius,
        provenance: Provenance::Radon,
    };
    let coords: Vec<f64> = (0..out_size).map(|i| img.coord(i)).collect();
    let inv_dv = 1.0 / cs.bin_width;
    let r_max = cs.half_width();
    let norm = PI / na as f64;
    img.data.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(r, mut row)| {
        let w = coords[r];
        for (c, px) in row.iter_mut().enumerate() {
            let u = coords[c];
            // outside the detector disk only some angles reach the pixel
            if u * u + w * w > r_max * r_max {
                continue;
            }
            let mut acc = 0.0;
            for (k, &(sn, cn)) in trig.iter().enumerate() {
                let f = (u * cn + w * sn) * inv_dv + h;
                if f < 0.0 || f > (n - 1) as f64 {
                    continue;
                }
                let i = f.floor() as usize;
                let a = f - i as f64;
                let p = proj.row(k);
                acc += if i + 1 < n { p[i] * (1.0 - a) + p[i + 1] * a } else { p[i] };
            }
            *px = acc * norm;
        }
    });
    Ok(img)
}

/// Crop and backproject at each focus radius.
pub fn refocus(sino: &TransientSinogram, radii: &[f64], filter: RadonFilter, out_size: usize) -> Result<Vec<PlaneImage>> {
    radii
        .iter()
        .map(|&r| inverse_radon(&crop_sinogram(sino, r)?, filter, out_size))
        .collect()
}

/// Focus radius from the intensity-weighted mean of the v axis, clamped to
/// the radii representable by the sinogram.
pub fn auto_focus(sino: &TransientSinogram) -> Result<f64> {
    let owned;
    let sino = match sino.axis.as_v() {
        Some(_) => sino,
        None => {
            owned = sino.resample_to_v()?;
            &owned
        }
    };
    let v = *sino.v_axis()?;
    let (mut num, mut den) = (0.0, 0.0);
    for row in sino.data.rows() {
        for (j, &x) in row.iter().enumerate() {
            let x = x.max(0.0);
            num += x * v.value(j);
            den += x;
        }
    }
    if !(den > 0.0) {
        return Err(Error::EmptySinogram);
    }
    let rp2 = sino.circle.radius.powi(2);
    let r_max = (v.v_last() - rp2).max(0.0).sqrt();
    let r_min = (v.v_min - rp2).max(0.0).sqrt();
    Ok((num / den - rp2).max(0.0).sqrt().clamp(r_min, r_max))
}

/// Predicted confusion-ring radius `r_gt^2 - r_est^2` in image units.
pub fn circle_of_confusion(r_gt: f64, r_est: f64) -> f64 {
    r_gt * r_gt - r_est * r_est
}

/// Radius (image units) of the brightest azimuthal ring around `center`.
pub fn ring_radius(img: &PlaneImage, center: (f64, f64), max_radius: f64) -> f64 {
    let p = img.pixel_size();
    let nbins = (max_radius / p).ceil() as usize + 1;
    let mut sum = vec![0.0; nbins];
    let mut cnt = vec![0usize; nbins];
    for ((r, c), &v) in img.data.indexed_iter() {
        let d = ((img.coord(c) - center.0).powi(2) + (img.coord(r) - center.1).powi(2)).sqrt();
        let b = (d / p).round() as usize;
        if b < nbins {
            sum[b] += v;
            cnt[b] += 1;
        }
    }
    let mean: Vec<f64> = sum.iter().zip(&cnt).map(|(s, &n)| if n > 0 { s / n as f64 } else { f64::NEG_INFINITY }).collect();
    let best = mean.iter().enumerate().fold(0, |b, (i, &m)| if m > mean[b] { i } else { b });
    // parabolic refinement on the bin profile
    let offset = if best > 0 && best + 1 < nbins && mean[best - 1].is_finite() && mean[best + 1].is_finite() {
        let (a, b, c) = (mean[best - 1], mean[best], mean[best + 1]);
        let den = a - 2.0 * b + c;
        if den < 0.0 {
            (0.5 * (a - c) / den).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };
    (best as f64 + offset) * p
}

fn bilinear(data: &Array2<f64>, x: f64, y: f64) -> f64 {
    let (h, w) = data.dim();
    if x < 0.0 || y < 0.0 || x > (w - 1) as f64 || y > (h - 1) as f64 {
        return 0.0;
    }
    let (c, r) = (x.floor() as usize, y.floor() as usize);
    let (a, b) = (x - c as f64, y - r as f64);
    let c1 = (c + 1).min(w - 1);
    let r1 = (r + 1).min(h - 1);
    data[[r, c]] * (1.0 - a) * (1.0 - b)
        + data[[r, c1]] * a * (1.0 - b)
        + data[[r1, c]] * (1.0 - a) * b
        + data[[r1, c1]] * a * b
}

/// Single-coefficient radial remap about the image center. Output pixel `p`
/// samples the input at `c + (p - c)(1 + k |q|^2)` with `q` normalized by the
/// half size; samples falling outside the input are zero (cropped).
pub fn undistort(img: &PlaneImage, strength: f64) -> Result<PlaneImage> {
    if !(strength >= 0.0) {
        return Err(Error::InvalidInput(format!("undistortion strength must be >= 0, got {strength}")));
    }
    if strength == 0.0 {
        return Ok(img.clone());
    }
    let (h, w) = img.data.dim();
    let (cy, cx) = ((h - 1) as f64 / 2.0, (w - 1) as f64 / 2.0);
    let (sy, sx) = ((h as f64 / 2.0).max(1.0), (w as f64 / 2.0).max(1.0));
    let data = Array2::from_shape_fn((h, w), |(r, c)| {
        let (dx, dy) = (c as f64 - cx, r as f64 - cy);
        let q2 = (dx / sx).powi(2) + (dy / sy).powi(2);
        let f = 1.0 + strength * q2;
        bilinear(&img.data, cx + dx * f, cy + dy * f)
    });
    Ok(PlaneImage { data, ..img.clone() })
}

/// Sparse plane-to-sinogram system. Column `j` is the v-sinogram of a unit
/// scatterer at pixel `j` (row-major) on the plane `z = depth`, flattened
/// `[angle][v]`.
#[derive(Debug, Clone)]
pub struct PlaneSystem {
    pub columns: Vec<Vec<(u32, f64)>>,
    pub num_rows: usize,
    pub depth: f64,
    pub resolution: usize,
    /// Plane half width in meters; pixels tile `[-half_width, half_width]^2`.
    pub half_width: f64,
    pub circle: ScanCircle,
    pub time_axis: TimeAxis,
    pub v_axis: VAxis,
}

/// Default memory budget for [`build_plane_matrix`].
pub const PLANE_BUDGET_BYTES: usize = 1 << 30;

fn plane_pixel(half_width: f64, resolution: usize, i: usize) -> f64 {
    -half_width + (i as f64 + 0.5) * 2.0 * half_width / resolution as f64
}

fn sparse_column(
    p: CartesianPoint,
    circle: &ScanCircle,
    time: &TimeAxis,
    v_axis: &VAxis,
) -> Result<Vec<(u32, f64)>> {
    let scene = Scene::Points(vec![Scatterer::new(p, 1.0)]);
    let s = simulate_sinogram(&scene, circle, time)?.resample_to_v_with(*v_axis)?;
    Ok(s
        .data
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, &v)| (i as u32, v))
        .collect())
}

/// Builds the plane system, failing early if its estimated size exceeds
/// `budget` bytes.
pub fn build_plane_matrix(
    depth: f64,
    circle: &ScanCircle,
    resolution: usize,
    half_width: f64,
    time: &TimeAxis,
    v_axis: &VAxis,
    budget: usize,
) -> Result<PlaneSystem> {
    if resolution == 0 || !(half_width > 0.0) || !(depth > 0.0) {
        return Err(Error::InvalidInput("plane needs positive resolution, half width and depth".into()));
    }
    let num_rows = circle.num_angles * v_axis.num_bins;
    if num_rows > u32::MAX as usize {
        return Err(Error::BudgetExceeded { required: num_rows, budget });
    }
    // estimate from the outermost pixel, whose traces are the widest
    let corner = CartesianPoint::new(plane_pixel(half_width, resolution, 0), plane_pixel(half_width, resolution, 0), depth);
    let probe = sparse_column(corner, circle, time, v_axis)?;
    let entry = std::mem::size_of::<(u32, f64)>();
    let required = resolution * resolution * (probe.len() * entry + std::mem::size_of::<Vec<(u32, f64)>>());
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let columns = (0..resolution * resolution)
        .into_par_iter()
        .map(|j| {
            let (iy, ix) = (j / resolution, j % resolution);
            let p = CartesianPoint::new(
                plane_pixel(half_width, resolution, ix),
                plane_pixel(half_width, resolution, iy),
                depth,
            );
            sparse_column(p, circle, time, v_axis)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PlaneSystem {
        columns,
        num_rows,
        depth,
        resolution,
        half_width,
        circle: *circle,
        time_axis: *time,
        v_axis: *v_axis,
    })
}

impl PlaneSystem {
    pub fn num_cols(&self) -> usize {
        self.columns.len()
    }

    /// Scene point of pixel `j`.
    pub fn pixel_point(&self, j: usize) -> CartesianPoint {
        let (iy, ix) = (j / self.resolution, j % self.resolution);
        CartesianPoint::new(
            plane_pixel(self.half_width, self.resolution, ix),
            plane_pixel(self.half_width, self.resolution, iy),
            self.depth,
        )
    }

    /// `A rho`.
    pub fn apply(&self, rho: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_rows];
        for (col, &x) in self.columns.iter().zip(rho) {
            if x != 0.0 {
                for &(i, a) in col {
                    out[i as usize] += a * x;
                }
            }
        }
        out
    }

    /// `A^T tau`.
    pub fn adjoint(&self, tau: &[f64]) -> Vec<f64> {
        self.columns
            .par_iter()
            .map(|col| col.iter().map(|&(i, a)| a * tau[i as usize]).sum())
            .collect()
    }

    /// Column `j` as a dense `[angle][v]` array.
    pub fn column_dense(&self, j: usize) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((self.circle.num_angles, self.v_axis.num_bins));
        let flat = out.as_slice_mut().expect("standard layout");
        for &(i, a) in &self.columns[j] {
            flat[i as usize] = a;
        }
        out
    }
}

/// Linear inversion settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveParams {
    pub lambda: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self { lambda: 1e-6, tol: 1e-6, max_iters: 5000 }
    }
}

/// Result of [`solve_plane`]. `raw` keeps negative values; `image` is clamped
/// at zero for display.
#[derive(Debug, Clone)]
pub struct PlaneSolution {
    pub raw: Array2<f64>,
    pub image: PlaneImage,
    pub converged: bool,
    pub iterations: usize,
    /// Relative normal-equation residual of the returned iterate.
    pub residual: f64,
}

impl PlaneSolution {
    /// Converts a non-converged solve into [`Error::NonConvergence`].
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence { iterations: self.iterations, residual: self.residual })
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `(A^T A + lambda I) rho = A^T tau` by conjugate gradients on a flat
/// measurement vector.
pub fn solve_normal_equations(sys: &PlaneSystem, tau: &[f64], params: &SolveParams) -> Result<(Vec<f64>, bool, usize, f64)> {
    if tau.len() != sys.num_rows {
        return Err(Error::ShapeMismatch(format!("measurement has {} entries, system {}", tau.len(), sys.num_rows)));
    }
    let n = sys.num_cols();
    let b = sys.adjoint(tau);
    let b_norm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok((x, true, 0, 0.0));
    }
    let normal = |p: &[f64]| {
        let mut q = sys.adjoint(&sys.apply(p));
        for (qi, pi) in q.iter_mut().zip(p) {
            *qi += params.lambda * pi;
        }
        q
    };
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let mut best = (x.clone(), 1.0);
    for it in 1..=params.max_iters {
        let q = normal(&p);
        let alpha = rs / dot(&p, &q);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let rs_new = dot(&r, &r);
        let rel = rs_new.sqrt() / b_norm;
        if rel < best.1 {
            best = (x.clone(), rel);
        }
        if rel <= params.tol {
            return Ok((x, true, it, rel));
        }
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    Ok((best.0, false, params.max_iters, best.1))
}

/// Regularized least-squares plane image from a sinogram on the system's v axis.
pub fn solve_plane(sino: &TransientSinogram, sys: &PlaneSystem, params: &SolveParams) -> Result<PlaneSolution> {
    let v = sino.v_axis()?;
    if v.num_bins != sys.v_axis.num_bins || sino.data.nrows() != sys.circle.num_angles {
        return Err(Error::ShapeMismatch(format!(
            "sinogram {:?} does not match system ({} angles, {} v bins)",
            sino.data.dim(),
            sys.circle.num_angles,
            sys.v_axis.num_bins
        )));
    }
    let tau = sino.data.as_standard_layout();
    let (x, converged, iterations, residual) =
        solve_normal_equations(sys, tau.as_slice().expect("standard layout"), params)?;
    let raw = Array2::from_shape_vec((sys.resolution, sys.resolution), x).expect("square plane");
    let image = PlaneImage {
        data: raw.mapv(|v| v.max(0.0)),
        half_extent: sys.half_width,
        scale: 1.0,
        provenance: Provenance::LinearInversion,
    };
    Ok(PlaneSolution { raw, image, converged, iterations, residual })
}

/// Naive confocal backprojection onto the plane `z = depth`: each pixel sums
/// every scan point's v-measurement at its squared distance. Returns an image
/// in plane meters at the grid's own resolution.
pub fn grid_backprojection(ct: &ConfocalTransient, depth: f64, half_width: f64, resolution: usize) -> Result<PlaneImage> {
    let v = ct
        .axis
        .as_v()
        .copied()
        .ok_or_else(|| Error::InvalidInput("grid backprojection needs a v-axis measurement".into()))?;
    let (ny, nx, nv) = ct.data.dim();
    let mut data = Array2::<f64>::zeros((resolution, resolution));
    data.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(r, mut row)| {
        let y = plane_pixel(half_width, resolution, r);
        for (c, px) in row.iter_mut().enumerate() {
            let x = plane_pixel(half_width, resolution, c);
            let mut acc = 0.0;
            for iy in 0..ny {
                for ix in 0..nx {
                    let w = ct.grid.node(ix, iy);
                    let d2 = (x - w.x).powi(2) + (y - w.y).powi(2) + depth * depth;
                    let f = v.position(d2);
                    if f < 0.0 || f > (nv - 1) as f64 {
                        continue;
                    }
                    let j = f.floor() as usize;
                    let a = f - j as f64;
                    let t = ct.data.slice(ndarray::s![iy, ix, ..]);
                    acc += if j + 1 < nv { t[j] * (1.0 - a) + t[j + 1] * a } else { t[j] };
                }
            }
            *px = acc;
        }
    });
    Ok(PlaneImage { data, half_extent: half_width, scale: 1.0, provenance: Provenance::GridBackprojection })
}

/// Nearest-neighbor resize to `size x size`.
pub fn resize_nearest(img: &Array2<f64>, size: usize) -> Array2<f64> {
    let (h, w) = img.dim();
    Array2::from_shape_fn((size, size), |(r, c)| {
        let sr = ((r as f64 + 0.5) * h as f64 / size as f64).floor() as usize;
        let sc = ((c as f64 + 0.5) * w as f64 / size as f64).floor() as usize;
        img[[sr.min(h - 1), sc.min(w - 1)]]
    })
}
