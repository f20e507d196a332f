//! 3D reconstruction with a light-cone-domain convolution model solved by
//! linearized ADMM under non-negativity, sparsity and total-variation priors.
//!
//! In the light-cone domain the confocal measurement on the `v = (tc/2)^2`
//! axis is a 3D convolution of the resampled albedo `rho_u(x, y, u = z^2)` with
//! a kernel supported on `w = dx^2 + dy^2`. Volumes handed to the solver are
//! laid out `[v][y][x]`; measurements internally as `[v][scan point]`.

use ndarray::{s, Array2, Array3, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{plan_1d, Direction, Fft3};
use crate::forward::{
    ConfocalTransient, Scatterer, TimeAxis, TransientAxis, TransientSinogram, VAxis, WallGrid,
};
use crate::geometry::{CartesianPoint, ScanCircle};

/// Physical bounds of a voxel volume, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeExtent {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub z: (f64, f64),
}

/// Albedo grid `data[[iz, iy, ix]]`. Voxel centers sit at
/// `lo + (i + 0.5) * (hi - lo) / n` along each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVolume {
    pub data: Array3<f64>,
    pub extent: VolumeExtent,
    /// Set when the z axis holds `u = z^2` samples rather than depth.
    pub lct_resampled: bool,
}

fn center(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    lo + (i as f64 + 0.5) * (hi - lo) / n as f64
}

impl VoxelVolume {
    pub fn zeros(shape: (usize, usize, usize), extent: VolumeExtent) -> Self {
        Self { data: Array3::zeros(shape), extent, lct_resampled: false }
    }

    /// Volume whose lateral voxels coincide with the nodes of `grid`.
    pub fn for_wall(grid: &WallGrid, nz: usize, z: (f64, f64)) -> Self {
        let half = grid.spacing / 2.0;
        let x0 = grid.origin.0 - half;
        let y0 = grid.origin.1 - half;
        let extent = VolumeExtent {
            x: (x0, x0 + grid.nx as f64 * grid.spacing),
            y: (y0, y0 + grid.ny as f64 * grid.spacing),
            z,
        };
        Self::zeros((nz, grid.ny, grid.nx), extent)
    }

    pub fn voxel_center(&self, iz: usize, iy: usize, ix: usize) -> CartesianPoint {
        let (nz, ny, nx) = self.data.dim();
        let e = &self.extent;
        CartesianPoint::new(
            center(e.x.0, e.x.1, nx, ix),
            center(e.y.0, e.y.1, ny, iy),
            center(e.z.0, e.z.1, nz, iz),
        )
    }

    pub fn slice_depth(&self, iz: usize) -> f64 {
        center(self.extent.z.0, self.extent.z.1, self.data.dim().0, iz)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.is_empty() {
            return Err(Error::InvalidInput("empty voxel volume".into()));
        }
        if self.data.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput("voxel albedos must be finite and >= 0".into()));
        }
        let e = &self.extent;
        if !(e.x.1 > e.x.0 && e.y.1 > e.y.0 && e.z.1 > e.z.0 && e.z.0 >= 0.0) {
            return Err(Error::InvalidInput(format!("invalid volume extent {e:?}")));
        }
        Ok(())
    }

    /// Nonzero voxels as point scatterers at the voxel centers.
    pub fn point_sources(&self) -> Vec<Scatterer> {
        self.data
            .indexed_iter()
            .filter(|(_, &a)| a != 0.0)
            .map(|((iz, iy, ix), &a)| Scatterer::new(self.voxel_center(iz, iy, ix), a))
            .collect()
    }

    /// Sum of albedo per depth slice.
    pub fn depth_profile(&self) -> Vec<f64> {
        self.data.axis_iter(Axis(0)).map(|s| s.sum()).collect()
    }

    /// Maximum-intensity projection along `axis` (0 = z, 1 = y, 2 = x).
    pub fn max_projection(&self, axis: usize) -> Array2<f64> {
        self.data.fold_axis(Axis(axis), f64::NEG_INFINITY, |&a, &b| a.max(b))
    }
}

/// Interpolation weights mapping a wall grid to a list of scan points.
/// Row `k` lists `(pixel index, weight)` pairs with pixel index `iy * nx + ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    pub nx: usize,
    pub ny: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SamplingMask {
    /// Bilinear weights for every scan point of `circle`.
    pub fn circle(grid: &WallGrid, circle: &ScanCircle) -> Result<Self> {
        let rows = circle
            .points()
            .map(|p| bilinear_weights(grid, p.x, p.y))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { nx: grid.nx, ny: grid.ny, rows })
    }

    /// One-hot rows selecting every grid node in row-major order.
    pub fn identity(grid: &WallGrid) -> Self {
        let rows = (0..grid.nx * grid.ny).map(|i| vec![(i, 1.0)]).collect();
        Self { nx: grid.nx, ny: grid.ny, rows }
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_pixels(&self) -> usize {
        self.nx * self.ny
    }

    pub fn weights(&self, row: usize) -> &[(usize, f64)] {
        &self.rows[row]
    }

    /// `[v][y][x]` volume to `[v][row]` samples.
    pub fn apply(&self, vol: &Array3<f64>) -> Array2<f64> {
        let nv = vol.dim().0;
        let mut out = Array2::<f64>::zeros((nv, self.rows.len()));
        Zip::from(out.rows_mut()).and(vol.outer_iter()).par_for_each(|mut o, slab| {
            let px = slab.as_slice().expect("standard layout");
            for (dst, row) in o.iter_mut().zip(&self.rows) {
                let mut it = row.iter();
                let mut acc = match it.next() {
                    Some(&(i, w)) => w * px[i],
                    None => 0.0,
                };
                for &(i, w) in it {
                    acc += w * px[i];
                }
                *dst = acc;
            }
        });
        out
    }

    /// Adjoint of [`SamplingMask::apply`].
    pub fn adjoint(&self, samples: &Array2<f64>) -> Array3<f64> {
        let nv = samples.nrows();
        let mut out = Array3::<f64>::zeros((nv, self.ny, self.nx));
        Zip::from(out.outer_iter_mut()).and(samples.rows()).par_for_each(|mut slab, row_vals| {
            let px = slab.as_slice_mut().expect("standard layout");
            for (&val, row) in row_vals.iter().zip(&self.rows) {
                for &(i, w) in row {
                    px[i] += w * val;
                }
            }
        });
        out
    }
}

fn snap(f: f64) -> f64 {
    let r = f.round();
    if (f - r).abs() < 1e-9 {
        r
    } else {
        f
    }
}

fn bilinear_weights(grid: &WallGrid, x: f64, y: f64) -> Result<Vec<(usize, f64)>> {
    let (fx, fy) = grid.position(x, y);
    let (fx, fy) = (snap(fx), snap(fy));
    let (mx, my) = ((grid.nx - 1) as f64, (grid.ny - 1) as f64);
    if !(fx >= 0.0 && fy >= 0.0 && fx <= mx && fy <= my) {
        return Err(Error::CircleOutOfBounds { x, y });
    }
    let ix = (fx.floor() as usize).min(grid.nx.saturating_sub(2));
    let iy = (fy.floor() as usize).min(grid.ny.saturating_sub(2));
    let (ax, ay) = (fx - ix as f64, fy - iy as f64);
    let mut w = Vec::with_capacity(4);
    for (dy, wy) in [(0, 1.0 - ay), (1, ay)] {
        for (dx, wx) in [(0, 1.0 - ax), (1, ax)] {
            let weight = wy * wx;
            if weight != 0.0 {
                w.push(((iy + dy) * grid.nx + ix + dx, weight));
            }
        }
    }
    Ok(w)
}

/// Light-cone convolution operator on a `[nv][ny][nx]` grid.
#[derive(Debug)]
pub struct LctOperator {
    pub grid: WallGrid,
    pub v_axis: VAxis,
    pub pad_z: bool,
    /// Measured v-domain mass of a unit-albedo scatterer.
    pub scale: f64,
    spectrum: Array3<Complex64>,
    fft: Fft3,
}

fn check_pow2(name: &str, n: usize) -> Result<()> {
    if n.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} = {n} must be a power of two")))
    }
}

impl LctOperator {
    /// Operator with a unit-mass kernel.
    pub fn new(grid: &WallGrid, v_axis: &VAxis, pad_z: bool) -> Result<Self> {
        Self::with_scale(grid, v_axis, pad_z, 1.0)
    }

    /// Operator matching `resample_to_v(simulate_confocal(..))` for measurements
    /// captured on `time` and resampled onto `v_axis`.
    pub fn for_time_axis(grid: &WallGrid, time: &TimeAxis, v_axis: &VAxis, pad_z: bool) -> Result<Self> {
        Self::with_scale(grid, v_axis, pad_z, 2.0 * time.range_per_bin() / v_axis.bin_width)
    }

    pub fn with_scale(grid: &WallGrid, v_axis: &VAxis, pad_z: bool, scale: f64) -> Result<Self> {
        check_pow2("nx", grid.nx)?;
        check_pow2("ny", grid.ny)?;
        check_pow2("nv", v_axis.num_bins)?;
        let nv = v_axis.num_bins;
        let nzf = if pad_z { 2 * nv } else { nv };
        let (ny, nx) = (grid.ny, grid.nx);
        let mut kernel = Array3::<Complex64>::zeros((nzf, ny, nx));
        for iy in 0..ny {
            let dy = iy.min(ny - iy) as f64 * grid.spacing;
            for ix in 0..nx {
                let dx = ix.min(nx - ix) as f64 * grid.spacing;
                let w = (dx * dx + dy * dy) / v_axis.bin_width;
                let j = w.floor();
                let frac = w - j;
                let j = j as usize;
                if j < nv {
                    kernel[[j, iy, ix]].re += scale * (1.0 - frac);
                }
                if frac > 0.0 && j + 1 < nv {
                    kernel[[j + 1, iy, ix]].re += scale * frac;
                }
            }
        }
        let fft = Fft3::new([nzf, ny, nx]);
        fft.process(&mut kernel, Direction::Forward);
        Ok(Self { grid: *grid, v_axis: *v_axis, pad_z, scale, spectrum: kernel, fft })
    }

    /// `(nv, ny, nx)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.v_axis.num_bins, self.grid.ny, self.grid.nx)
    }

    /// Kernel spectrum on the (possibly padded) FFT grid.
    pub fn spectrum(&self) -> &Array3<Complex64> {
        &self.spectrum
    }

    fn convolve(&self, x: &Array3<f64>, conj: bool) -> Array3<f64> {
        let (nv, ny, nx) = self.shape();
        assert_eq!(x.dim(), (nv, ny, nx), "LCT operand shape mismatch");
        let mut buf = Array3::<Complex64>::zeros(self.spectrum.dim());
        Zip::from(buf.slice_mut(s![..nv, .., ..])).and(x).par_for_each(|b, &v| b.re = v);
        self.fft.process(&mut buf, Direction::Forward);
        Zip::from(&mut buf).and(&self.spectrum).par_for_each(|b, &k| {
            *b *= if conj { k.conj() } else { k };
        });
        self.fft.process(&mut buf, Direction::Inverse);
        let mut out = Array3::<f64>::zeros((nv, ny, nx));
        Zip::from(&mut out).and(buf.slice(s![..nv, .., ..])).par_for_each(|o, b| *o = b.re);
        out
    }

    /// Forward model `H rho_u`.
    pub fn apply(&self, rho_u: &Array3<f64>) -> Array3<f64> {
        self.convolve(rho_u, false)
    }

    /// Adjoint `H* tau`.
    pub fn adjoint(&self, tau: &Array3<f64>) -> Array3<f64> {
        self.convolve(tau, true)
    }

    /// Resamples a depth volume onto the u grid, splatting each slice's mass
    /// linearly at `u = z^2`. Lateral dims must match the wall grid.
    pub fn volume_to_u(&self, vol: &VoxelVolume) -> Result<Array3<f64>> {
        let (nz, ny, nx) = vol.data.dim();
        let (nv, gy, gx) = self.shape();
        if (ny, nx) != (gy, gx) {
            return Err(Error::ShapeMismatch(format!(
                "volume is {ny}x{nx} laterally, wall grid is {gy}x{gx}"
            )));
        }
        let mut out = Array3::<f64>::zeros((nv, ny, nx));
        for iz in 0..nz {
            let z = vol.slice_depth(iz);
            let f = self.v_axis.position(z * z);
            let j = f.floor();
            let frac = f - j;
            if j < 0.0 || j as usize >= nv || (j as usize == nv - 1 && frac > 0.0) {
                return Err(Error::RangeOverflow { time: z, max_time: self.v_axis.v_last().sqrt() });
            }
            let j = j as usize;
            let slab = vol.data.index_axis(Axis(0), iz);
            out.index_axis_mut(Axis(0), j).scaled_add(1.0 - frac, &slab);
            if frac > 0.0 {
                out.index_axis_mut(Axis(0), j + 1).scaled_add(frac, &slab);
            }
        }
        Ok(out)
    }

    /// Bins a u-domain volume back into `nz` depth slices over `z_range`,
    /// distributing each u-sample's mass linearly between slice centers.
    pub fn u_to_volume(&self, rho_u: &Array3<f64>, nz: usize, z_range: (f64, f64)) -> VoxelVolume {
        let mut vol = VoxelVolume::for_wall(&self.grid, nz, z_range);
        let dz = (z_range.1 - z_range.0) / nz as f64;
        for (j, slab) in rho_u.outer_iter().enumerate() {
            let u = self.v_axis.value(j);
            if u <= 0.0 {
                continue;
            }
            let f = (u.sqrt() - z_range.0) / dz - 0.5;
            if f < -0.5 || f > nz as f64 - 0.5 {
                continue;
            }
            let k = f.floor();
            let frac = f - k;
            if k >= 0.0 {
                vol.data.index_axis_mut(Axis(0), k as usize).scaled_add(1.0 - frac, &slab);
            } else {
                vol.data.index_axis_mut(Axis(0), 0).scaled_add(1.0, &slab);
                continue;
            }
            let k = k as usize;
            if frac > 0.0 {
                let k1 = (k + 1).min(nz - 1);
                vol.data.index_axis_mut(Axis(0), k1).scaled_add(frac, &slab);
            }
        }
        vol
    }

    /// Confocal v-domain measurement of a depth volume.
    pub fn forward_volume(&self, vol: &VoxelVolume) -> Result<ConfocalTransient> {
        let tau = self.apply(&self.volume_to_u(vol)?);
        Ok(ConfocalTransient {
            data: tau.permuted_axes([1, 2, 0]).as_standard_layout().into_owned(),
            grid: self.grid,
            axis: TransientAxis::SquaredRange(self.v_axis),
        })
    }
}

/// `(tau + mu v) / (1 + mu)`, the data-fidelity proximal step.
pub fn prox_data(v: f64, tau: f64, mu: f64) -> f64 {
    (tau + mu * v) / (1.0 + mu)
}

pub fn prox_nonneg(v: f64) -> f64 {
    v.max(0.0)
}

/// Soft thresholding `sign(v) max(|v| - kappa, 0)`.
pub fn prox_l1(v: f64, kappa: f64) -> f64 {
    if v > kappa {
        v - kappa
    } else if v < -kappa {
        v + kappa
    } else {
        0.0
    }
}

/// Circular forward difference `x[i+1] - x[i]` along `axis`, evaluated as a
/// multiplication by `exp(2 pi i k / n) - 1` in the Fourier domain.
pub fn finite_difference_apply(vol: &Array3<f64>, axis: usize) -> Array3<f64> {
    spectral_difference(vol, axis, false)
}

/// Adjoint of [`finite_difference_apply`], `x[i-1] - x[i]`.
pub fn finite_difference_adjoint(vol: &Array3<f64>, axis: usize) -> Array3<f64> {
    spectral_difference(vol, axis, true)
}

fn spectral_difference(vol: &Array3<f64>, axis: usize, adjoint: bool) -> Array3<f64> {
    let n = vol.len_of(Axis(axis));
    let fwd = plan_1d(n, Direction::Forward);
    let inv = plan_1d(n, Direction::Inverse);
    let mult: Vec<Complex64> = (0..n)
        .map(|k| {
            let e = Complex64::from_polar(1.0, std::f64::consts::TAU * k as f64 / n as f64) - 1.0;
            if adjoint {
                e.conj()
            } else {
                e
            }
        })
        .collect();
    let mut out = vol.clone();
    let mut scratch = vec![Complex64::default(); fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())];
    let mut buf = vec![Complex64::default(); n];
    for mut lane in out.lanes_mut(Axis(axis)) {
        for (b, &v) in buf.iter_mut().zip(lane.iter()) {
            *b = Complex64::new(v, 0.0);
        }
        fwd.process_with_scratch(&mut buf, &mut scratch);
        for (b, m) in buf.iter_mut().zip(&mult) {
            *b *= m;
        }
        inv.process_with_scratch(&mut buf, &mut scratch);
        for (v, b) in lane.iter_mut().zip(&buf) {
            *v = b.re / n as f64;
        }
    }
    out
}

// Stencil forms of the circular differences used inside the solver loop.
fn diff(x: &Array3<f64>, axis: usize) -> Array3<f64> {
    let mut out = Array3::<f64>::zeros(x.raw_dim());
    let n = x.len_of(Axis(axis));
    Zip::from(out.lanes_mut(Axis(axis))).and(x.lanes(Axis(axis))).par_for_each(|mut o, l| {
        for i in 0..n {
            o[i] = l[(i + 1) % n] - l[i];
        }
    });
    out
}

fn diff_adjoint(y: &Array3<f64>, axis: usize) -> Array3<f64> {
    let mut out = Array3::<f64>::zeros(y.raw_dim());
    let n = y.len_of(Axis(axis));
    Zip::from(out.lanes_mut(Axis(axis))).and(y.lanes(Axis(axis))).par_for_each(|mut o, l| {
        for i in 0..n {
            o[i] = l[(i + n - 1) % n] - l[i];
        }
    });
    out
}

/// Solver settings. `lambda_*` are relative to a measurement normalized to
/// unit peak and an operator normalized to unit spectral norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmParams {
    pub mu: f64,
    /// Linearization step; estimated as `1.1 mu ||C||^2` when absent.
    pub nu: Option<f64>,
    pub lambda_s: f64,
    pub lambda_tv: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Enforce non-negativity through the `z2` split.
    pub nonneg: bool,
    /// Spectral norm `MH` is scaled to before solving.
    pub data_norm: f64,
    pub power_iters: usize,
    /// Depth slices of the returned volume.
    pub output_slices: usize,
    /// Depth range of the returned volume; defaults to the v axis range.
    pub z_range: Option<(f64, f64)>,
    pub divergence_streak: usize,
}

impl Default for AdmmParams {
    fn default() -> Self {
        Self {
            mu: 0.05,
            nu: None,
            lambda_s: 1e-2,
            lambda_tv: 1e-2,
            max_iters: 200,
            tol: 1e-4,
            nonneg: true,
            data_norm: 4.0,
            power_iters: 20,
            output_slices: 64,
            z_range: None,
            divergence_streak: 20,
        }
    }
}

/// Iterates of the scaled-form linearized ADMM with
/// `C = [MH; I; I; Dx; Dy; Dz]`.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub rho: Array3<f64>,
    /// `z1`, `u1` live in measurement space `[v][scan point]`.
    pub z1: Array2<f64>,
    pub u1: Array2<f64>,
    /// `z2..z6` and `u2..u6` live in volume space.
    pub z: [Array3<f64>; 5],
    pub u: [Array3<f64>; 5],
    pub mu: f64,
    pub nu: f64,
    pub lambda_s: f64,
    pub lambda_tv: f64,
    pub iteration: usize,
    pub objective: Vec<f64>,
}

/// Outcome of a solve. `rho_u` is in the caller's physical units.
#[derive(Debug, Clone)]
pub struct AdmmResult {
    pub rho_u: Array3<f64>,
    pub state: AdmmState,
    pub converged: bool,
    pub primal_residual: f64,
    /// `||MH rho - tau|| / ||tau||` at the returned iterate.
    pub measurement_residual: f64,
    /// Spectral norm estimate of `MH` used for normalization.
    pub operator_norm: f64,
    /// Peak of the raw measurement used for normalization.
    pub data_scale: f64,
}

struct Forward<'a> {
    op: &'a LctOperator,
    mask: Option<&'a SamplingMask>,
    gain: f64,
}

impl Forward<'_> {
    fn apply(&self, x: &Array3<f64>) -> Array2<f64> {
        let y = self.op.apply(x);
        let mut m = match self.mask {
            Some(mask) => mask.apply(&y),
            None => {
                let (nv, ny, nx) = y.dim();
                y.into_shape_with_order((nv, ny * nx)).expect("standard layout")
            }
        };
        if self.gain != 1.0 {
            m.mapv_inplace(|v| v * self.gain);
        }
        m
    }

    fn adjoint(&self, y: &Array2<f64>) -> Array3<f64> {
        let (nv, ny, nx) = self.op.shape();
        let back = match self.mask {
            Some(mask) => mask.adjoint(y),
            None => y.clone().into_shape_with_order((nv, ny, nx)).expect("standard layout"),
        };
        let mut x = self.op.adjoint(&back);
        if self.gain != 1.0 {
            x.mapv_inplace(|v| v * self.gain);
        }
        x
    }
}

fn norm2<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn l1<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

fn random_volume(shape: (usize, usize, usize), seed: u64) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array3::from_shape_simple_fn(shape, || rng.random::<f64>() - 0.5)
}

fn normalize(x: &mut Array3<f64>) -> f64 {
    let n = norm2(x);
    if n > 0.0 {
        x.mapv_inplace(|v| v / n);
    }
    n
}

/// Power estimate of `||MH||`.
fn operator_norm(fwd: &Forward, iters: usize, shape: (usize, usize, usize)) -> f64 {
    let mut x = Array3::<f64>::ones(shape);
    normalize(&mut x);
    let mut est = 0.0;
    for _ in 0..iters.max(1) {
        let mut y = fwd.adjoint(&fwd.apply(&x));
        est = normalize(&mut y);
        x = y;
    }
    est.sqrt()
}

/// `C* C x` for the stacked operator.
fn gram(fwd: &Forward, x: &Array3<f64>) -> Array3<f64> {
    let mut out = fwd.adjoint(&fwd.apply(x));
    out.scaled_add(2.0, x);
    for axis in 0..3 {
        out += &diff_adjoint(&diff(x, axis), axis);
    }
    out
}

/// Power estimate of `||C||^2`.
fn stacked_norm_sq(fwd: &Forward, iters: usize, shape: (usize, usize, usize)) -> f64 {
    let mut x = random_volume(shape, 0x5eed);
    normalize(&mut x);
    let mut est = 0.0;
    for _ in 0..iters.max(1) {
        let mut y = gram(fwd, &x);
        est = normalize(&mut y);
        x = y;
    }
    est
}

fn objective(fwd_rho: &Array2<f64>, tau: &Array2<f64>, d: &[Array3<f64>; 3], rho: &Array3<f64>, p: &AdmmParams) -> f64 {
    let data: f64 = fwd_rho.iter().zip(tau.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * 0.5;
    data + p.lambda_s * l1(rho) + p.lambda_tv * d.iter().map(l1).sum::<f64>()
}

/// Solves `min 1/2 ||tau - M H rho_u||^2 + I+(rho_u) + lambda_s ||rho_u||_1
/// + lambda_tv sum ||D rho_u||_1` by linearized ADMM.
///
/// `tau` is `[scan point][v]`. With `mask = None` the scan points are every
/// wall grid node in row-major order.
pub fn admm_solve(
    tau: ArrayView2<f64>,
    op: &LctOperator,
    mask: Option<&SamplingMask>,
    params: &AdmmParams,
) -> Result<AdmmResult> {
    let shape = op.shape();
    let (nv, ny, nx) = shape;
    let rows = mask.map_or(ny * nx, |m| m.num_rows());
    if let Some(m) = mask {
        if (m.ny, m.nx) != (ny, nx) {
            return Err(Error::ShapeMismatch("sampling mask and operator grids differ".into()));
        }
    }
    if tau.dim() != (rows, nv) {
        return Err(Error::ShapeMismatch(format!(
            "measurement is {:?}, operator expects ({rows}, {nv})",
            tau.dim()
        )));
    }
    if !(params.mu > 0.0) {
        return Err(Error::InvalidInput(format!("mu must be positive, got {}", params.mu)));
    }

    let data_scale = tau.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let data_scale = if data_scale > 0.0 { data_scale } else { 1.0 };
    let tau_n: Array2<f64> = tau.t().mapv(|v| v / data_scale).as_standard_layout().into_owned();
    let tau_norm = norm2(&tau_n);

    let raw = Forward { op, mask, gain: 1.0 };
    let op_norm = operator_norm(&raw, params.power_iters, shape);
    if !(params.data_norm > 0.0) {
        return Err(Error::InvalidInput(format!("data_norm must be positive, got {}", params.data_norm)));
    }
    let gain = if op_norm > 0.0 { params.data_norm / op_norm } else { 1.0 };
    let fwd = Forward { op, mask, gain };
    let mu = params.mu;
    let nu = match params.nu {
        Some(nu) => nu,
        None => 1.1 * mu * stacked_norm_sq(&fwd, params.power_iters, shape),
    };

    let zeros3 = || Array3::<f64>::zeros(shape);
    let mut st = AdmmState {
        rho: zeros3(),
        z1: Array2::zeros((nv, rows)),
        u1: Array2::zeros((nv, rows)),
        z: [zeros3(), zeros3(), zeros3(), zeros3(), zeros3()],
        u: [zeros3(), zeros3(), zeros3(), zeros3(), zeros3()],
        mu,
        nu,
        lambda_s: params.lambda_s,
        lambda_tv: params.lambda_tv,
        iteration: 0,
        objective: Vec::new(),
    };
    let kappa_s = params.lambda_s / mu;
    let kappa_tv = params.lambda_tv / mu;
    let step = mu / nu;

    let mut h_rho = fwd.apply(&st.rho);
    let mut d_rho = [diff(&st.rho, 0), diff(&st.rho, 1), diff(&st.rho, 2)];
    let mut converged = false;
    let mut primal_residual = f64::INFINITY;
    let mut streak = 0usize;

    for it in 0..params.max_iters {
        // z-updates from v = C rho + u
        Zip::from(&mut st.z1).and(&h_rho).and(&st.u1).and(&tau_n).par_for_each(|z, &c, &u, &t| {
            *z = prox_data(c + u, t, mu);
        });
        Zip::from(&mut st.z[0]).and(&st.rho).and(&st.u[0]).par_for_each(|z, &r, &u| {
            *z = if params.nonneg { prox_nonneg(r + u) } else { r + u };
        });
        Zip::from(&mut st.z[1]).and(&st.rho).and(&st.u[1]).par_for_each(|z, &r, &u| {
            *z = prox_l1(r + u, kappa_s);
        });
        for a in 0..3 {
            Zip::from(&mut st.z[2 + a]).and(&d_rho[a]).and(&st.u[2 + a]).par_for_each(|z, &d, &u| {
                *z = prox_l1(d + u, kappa_tv);
            });
        }

        // dual ascent, u += C rho - z
        Zip::from(&mut st.u1).and(&h_rho).and(&st.z1).par_for_each(|u, &c, &z| *u += c - z);
        for (b, c) in [&st.rho, &st.rho, &d_rho[0], &d_rho[1], &d_rho[2]].into_iter().enumerate() {
            Zip::from(&mut st.u[b]).and(c).and(&st.z[b]).par_for_each(|u, &c, &z| *u += c - z);
        }

        // linearized primal step, rho -= (mu/nu) C*(C rho - z + u)
        let mut r1 = h_rho.clone();
        Zip::from(&mut r1).and(&st.z1).and(&st.u1).par_for_each(|r, &z, &u| *r += u - z);
        let mut grad = fwd.adjoint(&r1);
        for b in 0..2 {
            Zip::from(&mut grad).and(&st.rho).and(&st.z[b]).and(&st.u[b]).par_for_each(|g, &r, &z, &u| {
                *g += r - z + u;
            });
        }
        for a in 0..3 {
            let mut ra = d_rho[a].clone();
            Zip::from(&mut ra).and(&st.z[2 + a]).and(&st.u[2 + a]).par_for_each(|r, &z, &u| *r += u - z);
            grad += &diff_adjoint(&ra, a);
        }
        st.rho.scaled_add(-step, &grad);

        h_rho = fwd.apply(&st.rho);
        d_rho = [diff(&st.rho, 0), diff(&st.rho, 1), diff(&st.rho, 2)];
        st.iteration = it + 1;
        let obj = objective(&h_rho, &tau_n, &d_rho, &st.rho, params);
        if let Some(&prev) = st.objective.last() {
            streak = if obj > prev { streak + 1 } else { 0 };
        }
        st.objective.push(obj);
        if streak >= params.divergence_streak || !obj.is_finite() {
            return Err(Error::Diverged { iteration: it + 1, streak });
        }

        // primal residual of the z/u state entering this step
        let mut zn = st.z1.iter().map(|v| v * v).sum::<f64>();
        for b in 0..5 {
            zn += st.z[b].iter().map(|v| v * v).sum::<f64>();
        }
        let r_sq: f64 = {
            let mut acc = st.z1.iter().zip(h_rho.iter()).map(|(z, c)| (c - z).powi(2)).sum::<f64>();
            for (b, c) in [&st.rho, &st.rho, &d_rho[0], &d_rho[1], &d_rho[2]].into_iter().enumerate() {
                acc += st.z[b].iter().zip(c.iter()).map(|(z, c)| (c - z).powi(2)).sum::<f64>();
            }
            acc
        };
        primal_residual = r_sq.sqrt() / zn.sqrt().max(f64::MIN_POSITIVE);
        if it > 0 && primal_residual < params.tol {
            converged = true;
            break;
        }
    }

    let measurement_residual = {
        let diff_sq: f64 = h_rho.iter().zip(tau_n.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        if tau_norm > 0.0 {
            diff_sq.sqrt() / tau_norm
        } else {
            diff_sq.sqrt()
        }
    };
    let rho_u = st.rho.mapv(|v| v * data_scale * gain);
    Ok(AdmmResult {
        rho_u,
        state: st,
        converged,
        primal_residual,
        measurement_residual,
        operator_norm: op_norm,
        data_scale,
    })
}

/// Reconstructed depth volume together with solver diagnostics.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub volume: VoxelVolume,
    pub result: AdmmResult,
}

fn finish(op: &LctOperator, result: AdmmResult, params: &AdmmParams) -> Reconstruction {
    let z_range = params.z_range.unwrap_or((op.v_axis.v_min.max(0.0).sqrt(), op.v_axis.v_last().sqrt()));
    let mut volume = op.u_to_volume(&result.rho_u, params.output_slices, z_range);
    if params.nonneg {
        volume.data.mapv_inplace(|v| v.max(0.0));
    }
    Reconstruction { volume, result }
}

fn check_v_axis(axis: &TransientAxis, op: &LctOperator) -> Result<()> {
    let v = axis
        .as_v()
        .ok_or_else(|| Error::InvalidInput("3D reconstruction needs a v-axis measurement".into()))?;
    let same = v.num_bins == op.v_axis.num_bins
        && (v.v_min - op.v_axis.v_min).abs() <= 1e-9 * op.v_axis.bin_width.max(1.0)
        && (v.bin_width - op.v_axis.bin_width).abs() <= 1e-9 * op.v_axis.bin_width;
    if same {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!("measurement v axis {v:?} differs from operator {:?}", op.v_axis)))
    }
}

/// Reconstructs a depth volume from a circular scan.
pub fn admm_reconstruct(
    sino: &TransientSinogram,
    op: &LctOperator,
    mask: &SamplingMask,
    params: &AdmmParams,
) -> Result<Reconstruction> {
    check_v_axis(&sino.axis, op)?;
    if mask.num_rows() != sino.data.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "mask has {} rows, sinogram has {} angles",
            mask.num_rows(),
            sino.data.nrows()
        )));
    }
    let result = admm_solve(sino.data.view(), op, Some(mask), params)?;
    Ok(finish(op, result, params))
}

/// Reconstructs a depth volume from a full confocal grid scan.
pub fn admm_reconstruct_confocal(ct: &ConfocalTransient, op: &LctOperator, params: &AdmmParams) -> Result<Reconstruction> {
    check_v_axis(&ct.axis, op)?;
    let (ny, nx, nv) = ct.data.dim();
    let flat = ct
        .data
        .view()
        .into_shape_with_order((ny * nx, nv))
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    let result = admm_solve(flat, op, None, params)?;
    Ok(finish(op, result, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> WallGrid {
        WallGrid::centered(8, 0.5)
    }

    fn rand3(shape: (usize, usize, usize), seed: u64) -> Array3<f64> {
        random_volume(shape, seed)
    }

    fn dot(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn lct_adjoint_identity() {
        for pad in [false, true] {
            let v = VAxis::new(16, 0.0, 0.05).unwrap();
            let op = LctOperator::new(&grid(), &v, pad).unwrap();
            let x = rand3(op.shape(), 1);
            let y = rand3(op.shape(), 2);
            let lhs = dot(&op.apply(&x), &y);
            let rhs = dot(&x, &op.adjoint(&y));
            assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn zero_volume_zero_measurement() {
        let v = VAxis::new(16, 0.0, 0.05).unwrap();
        let op = LctOperator::new(&grid(), &v, true).unwrap();
        assert!(op.apply(&Array3::zeros(op.shape())).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_non_power_of_two() {
        let v = VAxis::new(12, 0.0, 0.05).unwrap();
        assert!(LctOperator::new(&grid(), &v, true).is_err());
    }

    #[test]
    fn differences_spectral_matches_stencil() {
        let x = rand3((4, 6, 5), 3);
        for axis in 0..3 {
            let a = finite_difference_apply(&x, axis);
            let b = diff(&x, axis);
            assert!(a.iter().zip(b.iter()).all(|(p, q)| (p - q).abs() < 1e-12));
            let at = finite_difference_adjoint(&x, axis);
            let bt = diff_adjoint(&x, axis);
            assert!(at.iter().zip(bt.iter()).all(|(p, q)| (p - q).abs() < 1e-12));
        }
    }

    #[test]
    fn differences_of_constant_and_ramp() {
        let c = Array3::from_elem((4, 4, 4), 2.5);
        assert!(finite_difference_apply(&c, 1).iter().all(|v| v.abs() < 1e-12));
        let ramp = Array3::from_shape_fn((3, 3, 8), |(_, _, i)| 0.5 * i as f64);
        let d = finite_difference_apply(&ramp, 2);
        for ((_, _, i), v) in d.indexed_iter() {
            if i < 7 {
                assert!((v - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn circle_mask_rows_partition_unity() {
        let g = WallGrid::centered(16, 1.0);
        let c = ScanCircle::centered(g.inscribed_radius(), 37).unwrap();
        let m = SamplingMask::circle(&g, &c).unwrap();
        for k in 0..m.num_rows() {
            let s: f64 = m.weights(k).iter().map(|w| w.1).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let big = ScanCircle::centered(2.0, 8).unwrap();
        assert!(matches!(SamplingMask::circle(&g, &big), Err(Error::CircleOutOfBounds { .. })));
    }

    #[test]
    fn mask_adjoint_identity() {
        let g = WallGrid::centered(8, 1.0);
        let c = ScanCircle::centered(0.6, 11).unwrap();
        let m = SamplingMask::circle(&g, &c).unwrap();
        let x = rand3((5, 8, 8), 4);
        let y = Array2::from_shape_fn((5, 11), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let lhs: f64 = m.apply(&x).iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let rhs = dot(&x, &m.adjoint(&y));
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn prox_scalar_forms() {
        assert_eq!(prox_l1(2.0, 1.0), 1.0);
        assert_eq!(prox_l1(-0.5, 1.0), 0.0);
        assert_eq!(prox_nonneg(-3.0), 0.0);
        assert_eq!(prox_data(4.0, 4.0, 1.0), 4.0);
        assert!((prox_data(3.0, 7.0, 1e9) - 3.0).abs() / 3.0 < 1e-6);
    }

    #[test]
    fn u_volume_round_trip_conserves_mass() {
        let g = WallGrid::centered(8, 0.5);
        let v = VAxis::new(64, 0.0, 4.0 / 64.0).unwrap();
        let op = LctOperator::new(&g, &v, true).unwrap();
        let mut vol = VoxelVolume::for_wall(&g, 16, (0.5, 1.5));
        vol.data[[5, 3, 4]] = 2.0;
        let u = op.volume_to_u(&vol).unwrap();
        assert!((u.sum() - 2.0).abs() < 1e-12);
        let back = op.u_to_volume(&u, 16, (0.5, 1.5));
        assert!((back.data.sum() - 2.0).abs() < 1e-12);
        let prof = back.depth_profile();
        let arg = prof.iter().enumerate().fold(0, |b, (i, &p)| if p > prof[b] { i } else { b });
        assert!((arg as i64 - 5).abs() <= 1);
    }
}
