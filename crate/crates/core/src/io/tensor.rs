//! Tensor files: one UTF-8 JSON header line, then raw little-endian `f32`
//! values in row-major order (last axis fastest).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{AxisKind, ConfocalTransient, TransientAxis, TransientSinogram, WallGrid};
use crate::geometry::ScanCircle;
use crate::radon2d::{PlaneImage, Provenance};
use crate::recon3d::{VolumeExtent, VoxelVolume};

pub const DTYPE: &str = "f32le";
const MAX_HEADER: u64 = 1 << 20;

/// Acquisition or reconstruction geometry attached to a tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    Circle { circle: ScanCircle, axis: TransientAxis },
    Grid { grid: WallGrid, axis: TransientAxis },
    Volume { extent: VolumeExtent, lct_resampled: bool },
    Plane { half_extent: f64, scale: f64, provenance: Provenance },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub dims: Vec<usize>,
    pub axis_names: Vec<String>,
    pub axis_units: Vec<String>,
    #[serde(default)]
    pub axis_kind: Option<AxisKind>,
    #[serde(default)]
    pub geometry: Option<Geometry>,
    pub dtype: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub header: TensorHeader,
    pub data: ArrayD<f32>,
}

impl Tensor {
    pub fn new(data: ArrayD<f32>, axis_names: &[&str], axis_units: &[&str]) -> Self {
        let header = TensorHeader {
            dims: data.shape().to_vec(),
            axis_names: axis_names.iter().map(|s| s.to_string()).collect(),
            axis_units: axis_units.iter().map(|s| s.to_string()).collect(),
            axis_kind: None,
            geometry: None,
            dtype: DTYPE.to_string(),
        };
        Self { header, data }
    }

    fn with_geometry(mut self, kind: Option<AxisKind>, geometry: Geometry) -> Self {
        self.header.axis_kind = kind;
        self.header.geometry = Some(geometry);
        self
    }

    fn to_f64<D: ndarray::Dimension>(&self, expected: usize) -> Result<ndarray::Array<f64, D>> {
        if self.data.ndim() != expected {
            return Err(Error::ShapeMismatch(format!("expected a {expected}-d tensor, got {:?}", self.data.shape())));
        }
        self.data
            .mapv(f64::from)
            .into_dimensionality::<D>()
            .map_err(|e| Error::ShapeMismatch(e.to_string()))
    }
}

fn bin_unit(axis: &TransientAxis) -> (&'static str, &'static str) {
    match axis {
        TransientAxis::Time(_) => ("time", "s"),
        TransientAxis::SquaredRange(_) => ("v", "m^2"),
    }
}

fn to_f32<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> ArrayD<f32> {
    a.mapv(|v| v as f32).into_dyn()
}

impl From<&TransientSinogram> for Tensor {
    fn from(s: &TransientSinogram) -> Self {
        let (name, unit) = bin_unit(&s.axis);
        Tensor::new(to_f32(&s.data), &["angle", name], &["rad", unit])
            .with_geometry(Some(s.axis.kind()), Geometry::Circle { circle: s.circle, axis: s.axis })
    }
}

impl From<&ConfocalTransient> for Tensor {
    fn from(c: &ConfocalTransient) -> Self {
        let (name, unit) = bin_unit(&c.axis);
        Tensor::new(to_f32(&c.data), &["y", "x", name], &["m", "m", unit])
            .with_geometry(Some(c.axis.kind()), Geometry::Grid { grid: c.grid, axis: c.axis })
    }
}

impl From<&VoxelVolume> for Tensor {
    fn from(v: &VoxelVolume) -> Self {
        Tensor::new(to_f32(&v.data), &["z", "y", "x"], &["m", "m", "m"])
            .with_geometry(None, Geometry::Volume { extent: v.extent, lct_resampled: v.lct_resampled })
    }
}

impl From<&PlaneImage> for Tensor {
    fn from(p: &PlaneImage) -> Self {
        Tensor::new(to_f32(&p.data), &["w", "u"], &["m", "m"]).with_geometry(
            None,
            Geometry::Plane { half_extent: p.half_extent, scale: p.scale, provenance: p.provenance },
        )
    }
}

/// Measurement stored in a tensor file.
#[derive(Debug, Clone, PartialEq)]
pub enum Measurement {
    Sinogram(TransientSinogram),
    Confocal(ConfocalTransient),
}

impl TryFrom<&Tensor> for Measurement {
    type Error = Error;

    fn try_from(t: &Tensor) -> Result<Self> {
        match &t.header.geometry {
            Some(Geometry::Circle { circle, axis }) => {
                let data: Array2<f64> = t.to_f64(2)?;
                if data.nrows() != circle.num_angles || data.ncols() != axis.num_bins() {
                    return Err(Error::ShapeMismatch("sinogram dims disagree with its geometry".into()));
                }
                Ok(Measurement::Sinogram(TransientSinogram { data, circle: *circle, axis: *axis }))
            }
            Some(Geometry::Grid { grid, axis }) => {
                let data: Array3<f64> = t.to_f64(3)?;
                if data.dim() != (grid.ny, grid.nx, axis.num_bins()) {
                    return Err(Error::ShapeMismatch("confocal dims disagree with its geometry".into()));
                }
                Ok(Measurement::Confocal(ConfocalTransient { data, grid: *grid, axis: *axis }))
            }
            _ => Err(Error::InvalidInput("tensor carries no scan geometry".into())),
        }
    }
}

impl TryFrom<&Tensor> for VoxelVolume {
    type Error = Error;

    fn try_from(t: &Tensor) -> Result<Self> {
        match &t.header.geometry {
            Some(Geometry::Volume { extent, lct_resampled }) => {
                Ok(VoxelVolume { data: t.to_f64(3)?, extent: *extent, lct_resampled: *lct_resampled })
            }
            _ => Err(Error::InvalidInput("tensor is not a voxel volume".into())),
        }
    }
}

/// Plain 2D image data of any tensor with two axes.
pub fn tensor_image(t: &Tensor) -> Result<Array2<f64>> {
    t.to_f64(2)
}

pub fn write_tensor(t: &Tensor, path: &Path) -> Result<()> {
    if t.header.dims != t.data.shape() {
        return Err(Error::ShapeMismatch(format!("header dims {:?} vs data {:?}", t.header.dims, t.data.shape())));
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &t.header)?;
    w.write_all(b"\n")?;
    let std = t.data.as_standard_layout();
    for v in std.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = Vec::new();
    (&mut r).take(MAX_HEADER).read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::MalformedHeader("missing newline-terminated header line".into()));
    }
    line.pop();
    let text = std::str::from_utf8(&line).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let header: TensorHeader = serde_json::from_str(text).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    if header.dtype != DTYPE {
        return Err(Error::UnsupportedDtype(header.dtype));
    }
    let n = header.dims.len();
    if header.axis_names.len() != n || header.axis_units.len() != n {
        return Err(Error::MalformedHeader("axis names/units must match dims".into()));
    }
    let count = header
        .dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::MalformedHeader("dims overflow".into()))?;
    let expected = count
        .checked_mul(4)
        .ok_or_else(|| Error::MalformedHeader("dims overflow".into()))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(Error::SizeMismatch { expected, actual: payload.len() });
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let data = ArrayD::from_shape_vec(IxDyn(&header.dims), values).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    Ok(Tensor { header, data })
}
