//! Brute-force confocal transient simulator.
//!
//! Each point scatterer deposits `albedo / d^4` into the time bin of its
//! round-trip time `2 d / c`, split linearly between the two nearest bins.
//! Travel time between the imaging system and the wall is ignored.

use ndarray::{Array2, Array3, ArrayViewMut1, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CartesianPoint, ScanCircle, SPEED_OF_LIGHT};
use crate::recon3d::{SamplingMask, VoxelVolume};

/// Uniform time sampling: bin `i` sits at `t = i * bin_width` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeAxis {
    pub num_bins: usize,
    pub bin_width: f64,
}

impl TimeAxis {
    pub fn new(num_bins: usize, bin_width: f64) -> Result<Self> {
        if num_bins < 2 || !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "time axis needs >= 2 bins and a positive bin width (got {num_bins}, {bin_width})"
            )));
        }
        Ok(Self { num_bins, bin_width })
    }

    /// Axis whose last bin edge corresponds to a one-way distance of `max_range` meters.
    pub fn for_range(max_range: f64, num_bins: usize) -> Result<Self> {
        Self::new(num_bins, 2.0 * max_range / (SPEED_OF_LIGHT * num_bins as f64))
    }

    /// One-way distance covered by one bin.
    pub fn range_per_bin(&self) -> f64 {
        self.bin_width * SPEED_OF_LIGHT / 2.0
    }

    pub fn max_range(&self) -> f64 {
        self.num_bins as f64 * self.range_per_bin()
    }

    pub fn max_time(&self) -> f64 {
        self.num_bins as f64 * self.bin_width
    }

    /// Uniform v grid over `[0, max_range^2)` with `num_bins` samples.
    pub fn v_axis(&self, num_bins: usize) -> VAxis {
        let v_max = self.max_range().powi(2);
        VAxis { num_bins, v_min: 0.0, bin_width: v_max / num_bins as f64 }
    }
}

/// Uniform squared-range sampling: bin `j` sits at `v = v_min + j * bin_width` m^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VAxis {
    pub num_bins: usize,
    pub v_min: f64,
    pub bin_width: f64,
}

impl VAxis {
    pub fn new(num_bins: usize, v_min: f64, bin_width: f64) -> Result<Self> {
        if num_bins < 2 || !(bin_width > 0.0) || !(v_min >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "v axis needs >= 2 bins, positive width and v_min >= 0 (got {num_bins}, {v_min}, {bin_width})"
            )));
        }
        Ok(Self { num_bins, v_min, bin_width })
    }

    /// `num_bins` samples spanning `[v_lo, v_hi)`.
    pub fn spanning(v_lo: f64, v_hi: f64, num_bins: usize) -> Result<Self> {
        Self::new(num_bins, v_lo, (v_hi - v_lo) / num_bins as f64)
    }

    pub fn value(&self, j: usize) -> f64 {
        self.v_min + j as f64 * self.bin_width
    }

    /// Last sample position.
    pub fn v_last(&self) -> f64 {
        self.value(self.num_bins - 1)
    }

    /// Fractional bin index of `v`.
    pub fn position(&self, v: f64) -> f64 {
        (v - self.v_min) / self.bin_width
    }
}

/// Sampling of the last axis of a transient measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransientAxis {
    Time(TimeAxis),
    SquaredRange(VAxis),
}

impl TransientAxis {
    pub fn num_bins(&self) -> usize {
        match self {
            TransientAxis::Time(t) => t.num_bins,
            TransientAxis::SquaredRange(v) => v.num_bins,
        }
    }

    pub fn kind(&self) -> AxisKind {
        match self {
            TransientAxis::Time(_) => AxisKind::Time,
            TransientAxis::SquaredRange(_) => AxisKind::SquaredRange,
        }
    }

    pub fn as_v(&self) -> Option<&VAxis> {
        match self {
            TransientAxis::SquaredRange(v) => Some(v),
            TransientAxis::Time(_) => None,
        }
    }

    pub fn as_time(&self) -> Option<&TimeAxis> {
        match self {
            TransientAxis::Time(t) => Some(t),
            TransientAxis::SquaredRange(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    Time,
    SquaredRange,
}

/// Regular grid of confocal scan points on the wall. Node `(ix, iy)` sits at
/// `(origin.0 + ix * spacing, origin.1 + iy * spacing)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallGrid {
    pub nx: usize,
    pub ny: usize,
    pub origin: (f64, f64),
    pub spacing: f64,
}

impl WallGrid {
    /// `n x n` pixel centers tiling `[-half_width, half_width]^2`.
    pub fn centered(n: usize, half_width: f64) -> Self {
        let spacing = 2.0 * half_width / n as f64;
        let o = -half_width + spacing / 2.0;
        Self { nx: n, ny: n, origin: (o, o), spacing }
    }

    pub fn node(&self, ix: usize, iy: usize) -> CartesianPoint {
        CartesianPoint::new(
            self.origin.0 + ix as f64 * self.spacing,
            self.origin.1 + iy as f64 * self.spacing,
            0.0,
        )
    }

    /// Fractional node coordinates of a wall point.
    pub fn position(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.origin.0) / self.spacing, (y - self.origin.1) / self.spacing)
    }

    /// Radius of the largest circle about the grid center whose points stay
    /// inside the node lattice.
    pub fn inscribed_radius(&self) -> f64 {
        0.5 * (self.nx.min(self.ny) - 1) as f64 * self.spacing
    }

    pub fn center(&self) -> CartesianPoint {
        CartesianPoint::new(
            self.origin.0 + 0.5 * (self.nx - 1) as f64 * self.spacing,
            self.origin.1 + 0.5 * (self.ny - 1) as f64 * self.spacing,
            0.0,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: CartesianPoint,
    pub albedo: f64,
}

impl Scatterer {
    pub fn new(position: CartesianPoint, albedo: f64) -> Self {
        Self { position, albedo }
    }
}

/// Hidden scene: either point scatterers or an albedo volume.
#[derive(Debug, Clone, PartialEq)]
pub enum Scene {
    Points(Vec<Scatterer>),
    Volume(VoxelVolume),
}

impl Scene {
    pub fn points(scatterers: Vec<Scatterer>) -> Result<Self> {
        let s = Scene::Points(scatterers);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Scene::Points(pts) => {
                for s in pts {
                    if !(s.albedo >= 0.0) || !s.albedo.is_finite() {
                        return Err(Error::InvalidInput(format!("albedo must be >= 0, got {}", s.albedo)));
                    }
                    if !(s.position.z > 0.0) || !s.position.is_finite() {
                        return Err(Error::InvalidInput(format!(
                            "scatterer must lie in front of the wall, got {:?}",
                            s.position
                        )));
                    }
                }
                Ok(())
            }
            Scene::Volume(v) => v.validate(),
        }
    }

    /// All point sources with nonzero albedo. Voxels contribute at their centers.
    pub fn sources(&self) -> Vec<Scatterer> {
        match self {
            Scene::Points(pts) => pts.iter().copied().filter(|s| s.albedo != 0.0).collect(),
            Scene::Volume(v) => v.point_sources(),
        }
    }
}

/// Full confocal grid scan, `data[[iy, ix, bin]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfocalTransient {
    pub data: Array3<f64>,
    pub grid: WallGrid,
    pub axis: TransientAxis,
}

/// Circular confocal scan, `data[[angle, bin]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientSinogram {
    pub data: Array2<f64>,
    pub circle: ScanCircle,
    pub axis: TransientAxis,
}

impl TransientSinogram {
    pub fn v_axis(&self) -> Result<&VAxis> {
        self.axis
            .as_v()
            .ok_or_else(|| Error::InvalidInput("expected a squared-range (v) sinogram".into()))
    }

    /// Converts to the v domain on the default grid unless already there.
    pub fn into_v(self) -> Result<Self> {
        match self.axis {
            TransientAxis::SquaredRange(_) => Ok(self),
            TransientAxis::Time(_) => self.resample_to_v(),
        }
    }
}

fn splat(mut trace: ArrayViewMut1<f64>, wall: &CartesianPoint, sources: &[Scatterer], axis: &TimeAxis) -> Result<()> {
    let n = axis.num_bins;
    for s in sources {
        let d = s.position.distance(wall);
        let t = 2.0 * d / SPEED_OF_LIGHT;
        let f = t / axis.bin_width;
        let i = f.floor();
        let frac = f - i;
        let i = i as usize;
        if i >= n || (i == n - 1 && frac > 0.0) {
            return Err(Error::RangeOverflow { time: t, max_time: axis.max_time() });
        }
        let value = s.albedo / (d * d * d * d);
        trace[i] += value * (1.0 - frac);
        if frac > 0.0 {
            trace[i + 1] += value * frac;
        }
    }
    Ok(())
}

/// Simulates a confocal scan over every node of `grid`.
pub fn simulate_confocal(scene: &Scene, grid: &WallGrid, axis: &TimeAxis) -> Result<ConfocalTransient> {
    scene.validate()?;
    let sources = scene.sources();
    let mut data = Array3::<f64>::zeros((grid.ny, grid.nx, axis.num_bins));
    data.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .try_for_each(|(iy, mut row)| {
            for ix in 0..grid.nx {
                splat(row.index_axis_mut(Axis(0), ix), &grid.node(ix, iy), &sources, axis)?;
            }
            Ok::<(), Error>(())
        })?;
    Ok(ConfocalTransient { data, grid: *grid, axis: TransientAxis::Time(*axis) })
}

/// Simulates a circular confocal scan (time axis).
pub fn simulate_sinogram(scene: &Scene, circle: &ScanCircle, axis: &TimeAxis) -> Result<TransientSinogram> {
    scene.validate()?;
    let sources = scene.sources();
    let mut data = Array2::<f64>::zeros((circle.num_angles, axis.num_bins));
    data.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .try_for_each(|(k, row)| splat(row, &circle.point(k), &sources, axis))?;
    Ok(TransientSinogram { data, circle: *circle, axis: TransientAxis::Time(*axis) })
}

/// Resamples one time-domain trace onto a v grid with the `v^{3/2}` rescale.
/// Each v bin averages the linearly interpolated trace over its width, using
/// enough sub-samples to visit every time bin it covers; bins narrower than a
/// time bin reduce to a single point sample at the bin center.
fn resample_trace(trace: &[f64], time: &TimeAxis, v_axis: &VAxis, out: &mut [f64]) {
    let n = trace.len();
    let scale = 2.0 / (SPEED_OF_LIGHT * time.bin_width);
    let rpb = time.range_per_bin();
    let dv = v_axis.bin_width;
    let sample = |v: f64| {
        if v <= 0.0 {
            return 0.0;
        }
        let f = v.sqrt() * scale;
        let i = f.floor();
        let frac = f - i;
        let i = i as usize;
        let value = if i + 1 < n {
            trace[i] * (1.0 - frac) + trace[i + 1] * frac
        } else if i + 1 == n && frac == 0.0 {
            trace[i]
        } else {
            0.0
        };
        value * v * v.sqrt()
    };
    for (j, o) in out.iter_mut().enumerate() {
        let v = v_axis.value(j);
        let lo = (v - 0.5 * dv).max(0.0);
        // v width of one time bin at the near edge of this v bin
        let span = 2.0 * lo.sqrt() * rpb + rpb * rpb;
        let m = (2.0 * dv / span).ceil().max(1.0).min(4096.0) as usize;
        *o = if m == 1 {
            sample(v)
        } else {
            (0..m).map(|s| sample(v + ((s as f64 + 0.5) / m as f64 - 0.5) * dv)).sum::<f64>() / m as f64
        };
    }
}

/// Operations shared by grid and circular transients.
pub trait Transient: Sized {
    fn axis(&self) -> &TransientAxis;
    fn values(&self) -> &[f64];
    fn values_mut(&mut self) -> &mut [f64];

    /// Resamples onto an explicit v grid. Requires a time axis.
    fn resample_to_v_with(&self, v_axis: VAxis) -> Result<Self>;

    /// Resamples onto `[0, (nt * dt * c / 2)^2)` with `nt` bins.
    fn resample_to_v(&self) -> Result<Self> {
        let n = self.axis().num_bins();
        self.resample_to_v_bins(n)
    }

    /// Resamples onto `[0, (nt * dt * c / 2)^2)` with `num_bins` bins.
    fn resample_to_v_bins(&self, num_bins: usize) -> Result<Self> {
        let time = time_axis_of(self.axis())?;
        self.resample_to_v_with(time.v_axis(num_bins))
    }

    /// Replaces every bin by a Poisson draw with mean `scale * value + dark_rate`.
    fn add_poisson_noise(&self, scale: f64, dark_rate: f64, seed: u64) -> Result<Self>
    where
        Self: Clone,
    {
        if !(scale > 0.0) || !(dark_rate >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise scale must be > 0 and dark rate >= 0 (got {scale}, {dark_rate})"
            )));
        }
        let mut out = self.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in out.values_mut() {
            let mean = scale * v.max(0.0) + dark_rate;
            *v = if mean > 0.0 {
                Poisson::new(mean)
                    .map_err(|e| Error::InvalidInput(format!("poisson mean {mean}: {e}")))?
                    .sample(&mut rng)
            } else {
                0.0
            };
        }
        Ok(out)
    }
}

fn time_axis_of(axis: &TransientAxis) -> Result<TimeAxis> {
    axis.as_time()
        .copied()
        .ok_or_else(|| Error::InvalidInput("measurement is already on a v axis".into()))
}

impl Transient for TransientSinogram {
    fn axis(&self) -> &TransientAxis {
        &self.axis
    }

    fn values(&self) -> &[f64] {
        self.data.as_slice().expect("standard layout")
    }

    fn values_mut(&mut self) -> &mut [f64] {
        self.data.as_slice_mut().expect("standard layout")
    }

    fn resample_to_v_with(&self, v_axis: VAxis) -> Result<Self> {
        let time = time_axis_of(&self.axis)?;
        let mut data = Array2::<f64>::zeros((self.data.nrows(), v_axis.num_bins));
        Zip::from(data.rows_mut()).and(self.data.rows()).par_for_each(|mut out, trace| {
            let trace = trace.to_vec();
            resample_trace(&trace, &time, &v_axis, out.as_slice_mut().expect("row"));
        });
        Ok(Self { data, circle: self.circle, axis: TransientAxis::SquaredRange(v_axis) })
    }
}

impl Transient for ConfocalTransient {
    fn axis(&self) -> &TransientAxis {
        &self.axis
    }

    fn values(&self) -> &[f64] {
        self.data.as_slice().expect("standard layout")
    }

    fn values_mut(&mut self) -> &mut [f64] {
        self.data.as_slice_mut().expect("standard layout")
    }

    fn resample_to_v_with(&self, v_axis: VAxis) -> Result<Self> {
        let time = time_axis_of(&self.axis)?;
        let (ny, nx, _) = self.data.dim();
        let mut data = Array3::<f64>::zeros((ny, nx, v_axis.num_bins));
        Zip::from(data.lanes_mut(Axis(2)))
            .and(self.data.lanes(Axis(2)))
            .par_for_each(|mut out, trace| {
                let trace = trace.to_vec();
                resample_trace(&trace, &time, &v_axis, out.as_slice_mut().expect("lane"));
            });
        Ok(Self { data, grid: self.grid, axis: TransientAxis::SquaredRange(v_axis) })
    }
}

/// Bilinearly samples a grid scan along a circle, realizing the sampling
/// operator from a full confocal measurement to a sinogram.
pub fn subsample_circle(ct: &ConfocalTransient, circle: &ScanCircle) -> Result<TransientSinogram> {
    let mask = SamplingMask::circle(&ct.grid, circle)?;
    let (ny, nx, nt) = ct.data.dim();
    let flat = ct
        .data
        .view()
        .into_shape_with_order((ny * nx, nt))
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    let mut data = Array2::<f64>::zeros((circle.num_angles, nt));
    for (k, mut row) in data.rows_mut().into_iter().enumerate() {
        for &(idx, w) in mask.weights(k) {
            row.scaled_add(w, &flat.row(idx));
        }
    }
    Ok(TransientSinogram { data, circle: *circle, axis: ct.axis })
}
