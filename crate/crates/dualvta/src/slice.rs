//! Axis-aligned slices of a scalar volume as an 8-bit graymap plus a CSV of
//! the raw values.
//!
//! In-plane axes are (x, y) for a z slice, (x, z) for y and (y, z) for x.
//! Image row `r` holds second-axis index `r`; CSV rows follow the same layout.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dualvta_core::volume::VoxelGrid;

use crate::io::{self, IoError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            _ => Err(format!("axis must be x, y or z, got '{s}'")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SliceError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("index {index} out of range for axis with {len} voxels")]
    OutOfRange { index: usize, len: usize },
    #[error("{0}: expected a single-component volume")]
    Components(PathBuf),
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub width: usize,
    pub height: usize,
    /// Row-major, `width` values per row.
    pub values: Vec<f64>,
}

pub fn extract(grid: &VoxelGrid, values: &[f64], axis: Axis, index: usize) -> Result<Slice, SliceError> {
    let dims = grid.dims();
    let a = axis.index();
    if index >= dims[a] {
        return Err(SliceError::OutOfRange { index, len: dims[a] });
    }
    let (u, v) = match axis {
        Axis::X => (1, 2),
        Axis::Y => (0, 2),
        Axis::Z => (0, 1),
    };
    let (width, height) = (dims[u], dims[v]);
    let mut out = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let mut ijk = [0; 3];
            ijk[a] = index;
            ijk[u] = c;
            ijk[v] = r;
            out.push(values[grid.linear(ijk[0], ijk[1], ijk[2])]);
        }
    }
    Ok(Slice { width, height, values: out })
}

/// Min-max normalized 8-bit pixels; constant (or all non-finite) slices map to 0.
pub fn to_gray(slice: &Slice) -> Vec<u8> {
    let finite = slice.values.iter().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    slice
        .values
        .iter()
        .map(|v| if v.is_finite() && hi > lo { (255.0 * (v - lo) / (hi - lo)).round() as u8 } else { 0 })
        .collect()
}

pub fn pgm_bytes(slice: &Slice) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", slice.width, slice.height).into_bytes();
    out.extend(to_gray(slice));
    out
}

pub fn csv_text(slice: &Slice) -> String {
    let mut s = String::new();
    for row in slice.values.chunks(slice.width) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

/// Writes `out` (PGM) and `out` with a `.csv` extension; returns both paths.
pub fn emit_slice(volume: &Path, axis: Axis, index: usize, out: &Path) -> Result<(PathBuf, PathBuf), SliceError> {
    let (h, values) = io::read_raw(volume)?;
    if h.components != 1 {
        return Err(SliceError::Components(volume.to_path_buf()));
    }
    let slice = extract(&h.grid, &values, axis, index)?;
    let csv = out.with_extension("csv");
    let write = |p: &Path, bytes: &[u8]| std::fs::write(p, bytes).map_err(|source| SliceError::Write { path: p.to_path_buf(), source });
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| SliceError::Write { path: parent.to_path_buf(), source })?;
    }
    write(out, &pgm_bytes(&slice))?;
    write(&csv, csv_text(&slice).as_bytes())?;
    Ok((out.to_path_buf(), csv))
}
