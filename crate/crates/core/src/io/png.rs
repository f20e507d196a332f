//! 8-bit grayscale PNG output with a JSON sidecar describing the intensity mapping.

use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Normalization {
    /// Map the image's own `[min, max]` onto `[0, 255]`; flat images become 128.
    Minmax,
    /// Map `[lo, hi]` onto `[0, 255]`, clamping outside values.
    FixedRange { lo: f64, hi: f64 },
}

/// Mapping actually applied, written next to the PNG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PngSidecar {
    pub normalization: Normalization,
    pub lo: f64,
    pub hi: f64,
    pub width: u32,
    pub height: u32,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Converts an image to 8-bit levels under `norm`.
pub fn quantize(img: &Array2<f64>, norm: Normalization) -> (Array2<u8>, f64, f64) {
    let (lo, hi) = match norm {
        Normalization::Minmax => img
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))),
        Normalization::FixedRange { lo, hi } => (lo, hi),
    };
    let flat = !(hi > lo);
    let q = img.mapv(|v| {
        if flat {
            if matches!(norm, Normalization::Minmax) {
                128
            } else if v > lo {
                255
            } else {
                0
            }
        } else {
            (255.0 * (v - lo) / (hi - lo)).round().clamp(0.0, 255.0) as u8
        }
    });
    (q, lo, hi)
}

pub fn emit_png(img: &Array2<f64>, norm: Normalization, path: &Path) -> Result<PngSidecar> {
    let (h, w) = img.dim();
    let (q, lo, hi) = quantize(img, norm);
    let mut out = GrayImage::new(w as u32, h as u32);
    for ((r, c), &v) in q.indexed_iter() {
        out.put_pixel(c as u32, r as u32, Luma([v]));
    }
    out.save_with_format(path, image::ImageFormat::Png).map_err(|e| Error::Image(e.to_string()))?;
    let sidecar = PngSidecar { normalization: norm, lo, hi, width: w as u32, height: h as u32 };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(sidecar)
}

pub fn read_sidecar(png_path: &Path) -> Result<PngSidecar> {
    Ok(serde_json::from_str(&std::fs::read_to_string(sidecar_path(png_path))?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_gradient() {
        let c = Array2::from_elem((3, 3), 4.0);
        assert!(quantize(&c, Normalization::Minmax).0.iter().all(|&v| v == 128));
        let z = Array2::zeros((2, 2));
        assert!(quantize(&z, Normalization::FixedRange { lo: 0.0, hi: 1.0 }).0.iter().all(|&v| v == 0));
        let g = Array2::from_shape_vec((2, 2), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let q = quantize(&g, Normalization::Minmax).0;
        assert!(q[[0, 0]] < q[[0, 1]] && q[[0, 1]] < q[[1, 0]] && q[[1, 0]] < q[[1, 1]]);
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img.png");
        let norm = Normalization::FixedRange { lo: -1.0, hi: 2.5 };
        let written = emit_png(&Array2::from_elem((4, 5), 0.5), norm, &p).unwrap();
        let back = read_sidecar(&p).unwrap();
        assert_eq!(written, back);
        assert_eq!(back.normalization, norm);
        let decoded = image::open(&p).unwrap().to_luma8();
        assert_eq!(decoded.dimensions(), (5, 4));
    }
}
