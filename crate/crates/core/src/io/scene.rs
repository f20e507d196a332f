//! JSON scene descriptions.
//!
//! ```json
//! {
//!   "scatterers": [{ "position": [0.1, -0.2, 1.0], "albedo": 1.0 }],
//!   "scan": { "kind": "circle", "radius": 0.5, "center": [0.0, 0.0], "num_angles": 360 },
//!   "time_axis": { "num_bins": 2048, "max_range": 4.0 }
//! }
//! ```
//!
//! A voxel scene replaces `scatterers` with
//! `"volume": { "path": "vol.tensor" }`, resolved relative to the scene file.
//! Grid scans use `{ "kind": "grid", "n": 64, "half_width": 1.0 }`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{Scatterer, Scene, TimeAxis, WallGrid};
use crate::geometry::{CartesianPoint, ScanCircle};
use crate::io::tensor::read_tensor;
use crate::recon3d::VoxelVolume;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScattererSpec {
    pub position: [f64; 3],
    #[serde(default = "unit")]
    pub albedo: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeRef {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScanSpec {
    Circle {
        radius: f64,
        #[serde(default)]
        center: [f64; 2],
        num_angles: usize,
    },
    Grid {
        n: usize,
        half_width: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeAxisSpec {
    pub num_bins: usize,
    /// One-way distance covered by the axis, in meters.
    pub max_range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scatterers: Option<Vec<ScattererSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume: Option<VolumeRef>,
    pub scan: ScanSpec,
    pub time_axis: TimeAxisSpec,
}

/// Scan geometry resolved from a [`ScanSpec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scan {
    Circle(ScanCircle),
    Grid(WallGrid),
}

impl SceneFile {
    pub fn load(path: &Path) -> Result<(Self, Scene)> {
        let text = std::fs::read_to_string(path)?;
        let file: SceneFile = serde_json::from_str(&text)?;
        let scene = file.scene(path.parent().unwrap_or(Path::new(".")))?;
        Ok((file, scene))
    }

    /// Builds and validates the scene; volume paths resolve against `base`.
    pub fn scene(&self, base: &Path) -> Result<Scene> {
        let scene = match (&self.scatterers, &self.volume) {
            (Some(pts), None) => Scene::Points(
                pts.iter()
                    .map(|s| Scatterer::new(CartesianPoint::new(s.position[0], s.position[1], s.position[2]), s.albedo))
                    .collect(),
            ),
            (None, Some(v)) => {
                let p = if v.path.is_absolute() { v.path.clone() } else { base.join(&v.path) };
                Scene::Volume(VoxelVolume::try_from(&read_tensor(&p)?)?)
            }
            _ => {
                return Err(Error::InvalidInput(
                    "scene needs exactly one of `scatterers` or `volume`".into(),
                ))
            }
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn scan(&self) -> Result<Scan> {
        match self.scan {
            ScanSpec::Circle { radius, center, num_angles } => Ok(Scan::Circle(ScanCircle::new(
                radius,
                CartesianPoint::new(center[0], center[1], 0.0),
                num_angles,
            )?)),
            ScanSpec::Grid { n, half_width } => {
                if n < 2 || !(half_width > 0.0) {
                    return Err(Error::InvalidInput("grid scan needs n >= 2 and a positive half width".into()));
                }
                Ok(Scan::Grid(WallGrid::centered(n, half_width)))
            }
        }
    }

    pub fn time_axis(&self) -> Result<TimeAxis> {
        TimeAxis::for_range(self.time_axis.max_range, self.time_axis.num_bins)
    }
}
