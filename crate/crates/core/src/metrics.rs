//! Image similarity, localization error and timing bookkeeping.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CartesianPoint;

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Mean SSIM over all `window x window` patches (stride 1) with the standard
/// constants. The dynamic range is taken from `reference` (1 when flat).
pub fn ssim(img: &Array2<f64>, reference: &Array2<f64>) -> Result<f64> {
    ssim_with(img, reference, SSIM_WINDOW, SSIM_K1, SSIM_K2)
}

pub fn ssim_with(img: &Array2<f64>, reference: &Array2<f64>, window: usize, k1: f64, k2: f64) -> Result<f64> {
    if img.dim() != reference.dim() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", img.dim(), reference.dim())));
    }
    let (h, w) = img.dim();
    if h == 0 || w == 0 || window == 0 {
        return Err(Error::InvalidInput("ssim needs non-empty images and window".into()));
    }
    let win = window.min(h).min(w);
    let (lo, hi) = reference.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = if hi > lo { hi - lo } else { 1.0 };
    let c1 = (k1 * range).powi(2);
    let c2 = (k2 * range).powi(2);

    let sx = SummedArea::new(img, |a, _| a);
    let sy = SummedArea::new(reference, |_, b| b);
    let sxx = SummedArea::new(img, |a, _| a * a);
    let syy = SummedArea::new(reference, |_, b| b * b);
    let sxy = SummedArea::pair(img, reference);
    let n = (win * win) as f64;

    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..=h - win {
        for j in 0..=w - win {
            let mx = sx.sum(i, j, win) / n;
            let my = sy.sum(i, j, win) / n;
            let vx = (sxx.sum(i, j, win) / n - mx * mx).max(0.0);
            let vy = (syy.sum(i, j, win) / n - my * my).max(0.0);
            let cxy = sxy.sum(i, j, win) / n - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

struct SummedArea {
    table: Array2<f64>,
}

impl SummedArea {
    fn build(h: usize, w: usize, value: impl Fn(usize, usize) -> f64) -> Self {
        let mut table = Array2::<f64>::zeros((h + 1, w + 1));
        for i in 0..h {
            for j in 0..w {
                table[[i + 1, j + 1]] = value(i, j) + table[[i, j + 1]] + table[[i + 1, j]] - table[[i, j]];
            }
        }
        Self { table }
    }

    fn new(a: &Array2<f64>, f: impl Fn(f64, f64) -> f64) -> Self {
        let (h, w) = a.dim();
        Self::build(h, w, |i, j| f(a[[i, j]], a[[i, j]]))
    }

    fn pair(a: &Array2<f64>, b: &Array2<f64>) -> Self {
        let (h, w) = a.dim();
        Self::build(h, w, |i, j| a[[i, j]] * b[[i, j]])
    }

    fn sum(&self, i: usize, j: usize, win: usize) -> f64 {
        let t = &self.table;
        t[[i + win, j + win]] - t[[i, j + win]] - t[[i + win, j]] + t[[i, j]]
    }
}

/// Clamps negatives to zero and scales to unit peak.
pub fn normalize_image(img: &Array2<f64>) -> Array2<f64> {
    let peak = img.iter().fold(0.0f64, |m, &v| m.max(v));
    if peak > 0.0 {
        img.mapv(|v| v.max(0.0) / peak)
    } else {
        Array2::zeros(img.raw_dim())
    }
}

/// Minimum-cost perfect matching on a square cost matrix. Returns the column
/// assigned to each row.
pub fn hungarian(cost: &Array2<f64>) -> Result<Vec<usize>> {
    let (n, m) = cost.dim();
    if n != m {
        return Err(Error::ShapeMismatch(format!("cost matrix must be square, got {n}x{m}")));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("cost matrix has non-finite entries".into()));
    }
    // potentials and matching over 1-based indices; column 0 is a sentinel
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    Ok(assignment)
}

/// Per-axis mean absolute error after Euclidean min-cost matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisErrors {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub fn localization_error(detections: &[CartesianPoint], truth: &[CartesianPoint]) -> Result<AxisErrors> {
    if detections.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} detections vs {} ground-truth points",
            detections.len(),
            truth.len()
        )));
    }
    let n = truth.len();
    if n == 0 {
        return Ok(AxisErrors { x: 0.0, y: 0.0, z: 0.0 });
    }
    let cost = Array2::from_shape_fn((n, n), |(i, j)| detections[i].distance(&truth[j]));
    let assign = hungarian(&cost)?;
    let mut e = AxisErrors { x: 0.0, y: 0.0, z: 0.0 };
    for (i, &j) in assign.iter().enumerate() {
        let d = detections[i].sub(&truth[j]);
        e.x += d.x.abs();
        e.y += d.y.abs();
        e.z += d.z.abs();
    }
    let k = n as f64;
    Ok(AxisErrors { x: e.x / k, y: e.y / k, z: e.z / k })
}

/// Evaluation summary: localization error, image similarity and stage timings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_abs_error: Option<AxisErrors>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssim: Option<f64>,
    pub timings: BTreeMap<String, f64>,
}

impl EvalReport {
    /// Runs `f`, recording its wall-clock seconds under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.timings.entry(stage.to_string()).or_insert(0.0) += start.elapsed().as_secs_f64();
        out
    }
}
