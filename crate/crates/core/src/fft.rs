//! Multi-dimensional FFT helpers over `ndarray` built on `rustfft`.
//!
//! Inverse transforms are normalized by `1/N`.

use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayViewMut2, Axis};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

fn plan(planner: &mut FftPlanner<f64>, n: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    match dir {
        Direction::Forward => planner.plan_fft_forward(n),
        Direction::Inverse => planner.plan_fft_inverse(n),
    }
}

/// Transforms every lane of a 2D view along `axis`.
fn transform_lanes(mut view: ArrayViewMut2<Complex64>, axis: usize, fft: &Arc<dyn Fft<f64>>) {
    let n = view.len_of(Axis(axis));
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::default(); n];
    for mut lane in view.lanes_mut(Axis(axis)) {
        if let Some(s) = lane.as_slice_mut() {
            fft.process_with_scratch(s, &mut scratch);
        } else {
            for (b, v) in buf.iter_mut().zip(lane.iter()) {
                *b = *v;
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for (v, b) in lane.iter_mut().zip(buf.iter()) {
                *v = *b;
            }
        }
    }
}

fn scale(data: &mut [Complex64], factor: f64) {
    data.par_iter_mut().for_each(|v| *v *= factor);
}

/// Cached plans for a fixed 3D shape.
pub struct Fft3 {
    shape: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("shape", &self.shape).finish()
    }
}

impl Fft3 {
    pub fn new(shape: [usize; 3]) -> Self {
        let mut p = FftPlanner::new();
        let forward = [0, 1, 2].map(|a| plan(&mut p, shape[a], Direction::Forward));
        let inverse = [0, 1, 2].map(|a| plan(&mut p, shape[a], Direction::Inverse));
        Self { shape, forward, inverse }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn process(&self, data: &mut Array3<Complex64>, dir: Direction) {
        assert_eq!(data.shape(), &self.shape[..], "FFT shape mismatch");
        let plans = match dir {
            Direction::Forward => &self.forward,
            Direction::Inverse => &self.inverse,
        };
        // axes 2 and 1: parallel over slabs along axis 0
        data.axis_iter_mut(Axis(0)).into_par_iter().for_each(|mut slab| {
            transform_lanes(slab.view_mut(), 1, &plans[2]);
            transform_lanes(slab.view_mut(), 0, &plans[1]);
        });
        // axis 0: parallel over slabs along axis 1
        data.axis_iter_mut(Axis(1)).into_par_iter().for_each(|slab| {
            transform_lanes(slab, 0, &plans[0]);
        });
        if dir == Direction::Inverse {
            let n = (self.shape[0] * self.shape[1] * self.shape[2]) as f64;
            scale(data.as_slice_mut().expect("standard layout"), 1.0 / n);
        }
    }
}

/// In-place 2D FFT.
pub fn fft2(data: &mut Array2<Complex64>, dir: Direction) {
    let (rows, cols) = data.dim();
    let mut p = FftPlanner::new();
    let row_fft = plan(&mut p, cols, dir);
    let col_fft = plan(&mut p, rows, dir);
    fft_axis2(data, 1, &row_fft);
    fft_axis2(data, 0, &col_fft);
    if dir == Direction::Inverse {
        let n = (rows * cols) as f64;
        scale(data.as_slice_mut().expect("standard layout"), 1.0 / n);
    }
}

/// Unnormalized transform of every lane of a 2D array along `axis`.
pub fn fft_axis2(data: &mut Array2<Complex64>, axis: usize, fft: &Arc<dyn Fft<f64>>) {
    let other = 1 - axis;
    data.axis_chunks_iter_mut(Axis(other), 16)
        .into_par_iter()
        .for_each(|chunk| transform_lanes(chunk, axis, fft));
}

/// Plans a 1D transform.
pub fn plan_1d(n: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    plan(&mut FftPlanner::new(), n, dir)
}
