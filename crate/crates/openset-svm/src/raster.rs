//! Decision-region rasterization for 2D models: per-pixel predictions with
//! UNKNOWN rendered white, written as a binary portable pixmap (P6).

use crate::data::SparseSample;
use crate::error::{Error, Result};
use crate::ova::OvaModel;
use std::collections::BTreeMap;
use std::path::Path;

pub const UNKNOWN_COLOR: [u8; 3] = [255, 255, 255];

/// Fixed color cycle for known classes (UNKNOWN is always white).
const CLASS_COLORS: [[u8; 3]; 8] = [
    [214, 69, 65],   // red
    [65, 131, 215],  // blue
    [38, 166, 91],   // green
    [244, 179, 80],  // amber
    [142, 68, 173],  // purple
    [0, 181, 204],   // cyan
    [243, 156, 18],  // orange
    [108, 122, 137], // slate
];

#[derive(Debug, Clone)]
pub struct RasterSpec {
    /// (x_min, y_min, x_max, y_max)
    pub bounds: (f64, f64, f64, f64),
    /// Pixels per axis.
    pub resolution: usize,
    pub palette: BTreeMap<i32, [u8; 3]>,
}

impl RasterSpec {
    pub fn new(bounds: (f64, f64, f64, f64), resolution: usize, labels: &[i32]) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::Config(format!(
                "raster resolution must be >= 2, got {resolution}"
            )));
        }
        let (x0, y0, x1, y1) = bounds;
        if !(x1 > x0 && y1 > y0) {
            return Err(Error::Config(format!("degenerate raster bounds {bounds:?}")));
        }
        Ok(Self {
            bounds,
            resolution,
            palette: default_palette(labels),
        })
    }
}

pub fn default_palette(labels: &[i32]) -> BTreeMap<i32, [u8; 3]> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, CLASS_COLORS[i % CLASS_COLORS.len()]))
        .collect()
}

/// Per-pixel predictions, row-major with row 0 at the top (max y).
#[derive(Debug, Clone)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<Option<i32>>,
}

impl Raster {
    pub fn at(&self, row: usize, col: usize) -> Option<i32> {
        self.labels[row * self.width + col]
    }

    /// Iterator over the border pixels (first/last row and column).
    pub fn border(&self) -> impl Iterator<Item = Option<i32>> + '_ {
        (0..self.height).flat_map(move |r| {
            (0..self.width).filter_map(move |c| {
                let edge = r == 0 || r == self.height - 1 || c == 0 || c == self.width - 1;
                edge.then(|| self.at(r, c))
            })
        })
    }
}

/// Predict at every pixel center of the spec's grid.
pub fn raster_regions(model: &OvaModel, spec: &RasterSpec) -> Result<Raster> {
    let max_index = model.max_feature_index();
    if max_index > 2 {
        return Err(Error::DimensionMismatch { index: max_index });
    }
    let (x0, y0, x1, y1) = spec.bounds;
    let res = spec.resolution;
    let (dx, dy) = ((x1 - x0) / res as f64, (y1 - y0) / res as f64);
    let mut labels = Vec::with_capacity(res * res);
    for row in 0..res {
        let y = y1 - (row as f64 + 0.5) * dy;
        for col in 0..res {
            let x = x0 + (col as f64 + 0.5) * dx;
            labels.push(model.predict(&SparseSample::from_xy(0, x, y)).label);
        }
    }
    Ok(Raster {
        width: res,
        height: res,
        labels,
    })
}

/// Encode as a binary PPM; white pixels correspond exactly to UNKNOWN.
pub fn to_ppm(raster: &Raster, palette: &BTreeMap<i32, [u8; 3]>) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", raster.width, raster.height).into_bytes();
    for label in &raster.labels {
        let rgb = match label {
            None => UNKNOWN_COLOR,
            Some(l) => *palette.get(l).unwrap_or(&[0, 0, 0]),
        };
        out.extend_from_slice(&rgb);
    }
    out
}

pub fn write_ppm(path: &Path, raster: &Raster, palette: &BTreeMap<i32, [u8; 3]>) -> Result<()> {
    std::fs::write(path, to_ppm(raster, palette))?;
    Ok(())
}
