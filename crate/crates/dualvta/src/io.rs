//! Voxel volume files: a small text header (`.hdr`) next to a raw
//! little-endian payload, x index fastest.
//!
//! ```text
//! dualvta-volume 1
//! dims 81 81 101
//! spacing_mm 0.25 0.25 0.25
//! origin_mm -10 -10 -8
//! dtype f32
//! components 1
//! order x-fastest
//! data potential_dual.raw
//! ```
//!
//! `data` is relative to the header's directory. Tensor volumes use six
//! components per voxel in the order xx, yy, zz, xy, xz, yz.

use std::fs;
use std::path::{Path, PathBuf};

use dualvta_core::math::Sym3;
use dualvta_core::volume::{LabelVolume, MaskVolume, ScalarVolume, TensorVolume, Volume, VoxelGrid};

const MAGIC: &str = "dualvta-volume 1";

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] dualvta_core::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
    U8,
    U32,
}

impl DType {
    fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::F64 => "f64",
            DType::U8 => "u8",
            DType::U32 => "u32",
        }
    }

    fn size(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::F32 | DType::U32 => 4,
            DType::F64 => 8,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "f32" => DType::F32,
            "f64" => DType::F64,
            "u8" => DType::U8,
            "u32" => DType::U32,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub grid: VoxelGrid,
    pub dtype: DType,
    pub components: usize,
    pub data: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Format { path: path.to_path_buf(), message: message.into() }
}

pub fn read_header(path: &Path) -> Result<Header, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    if lines.next() != Some(MAGIC) {
        return Err(format_err(path, format!("first line must be '{MAGIC}'")));
    }
    let (mut dims, mut spacing, mut origin, mut dtype, mut components, mut data) = (None, None, None, None, None, None);
    for line in lines {
        let (key, value) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let value = value.trim();
        let floats = || -> Result<[f64; 3], IoError> {
            let v: Vec<f64> = value.split_whitespace().map(str::parse).collect::<Result<_, _>>().map_err(|_| format_err(path, format!("bad number in '{key}'")))?;
            v.try_into().map_err(|_| format_err(path, format!("'{key}' needs three values")))
        };
        match key {
            "dims" => {
                let v: Vec<usize> = value.split_whitespace().map(str::parse).collect::<Result<_, _>>().map_err(|_| format_err(path, "bad dims"))?;
                dims = Some(<[usize; 3]>::try_from(v).map_err(|_| format_err(path, "'dims' needs three values"))?);
            }
            "spacing_mm" => spacing = Some(floats()?),
            "origin_mm" => origin = Some(floats()?),
            "dtype" => dtype = Some(DType::parse(value).ok_or_else(|| format_err(path, format!("unknown dtype '{value}'")))?),
            "components" => {
                components = Some(value.parse::<usize>().map_err(|_| format_err(path, "bad components"))?);
            }
            "order" => {
                if value != "x-fastest" {
                    return Err(format_err(path, format!("unsupported order '{value}'")));
                }
            }
            "data" => data = Some(PathBuf::from(value)),
            other => return Err(format_err(path, format!("unknown key '{other}'"))),
        }
    }
    let missing = |k: &str| format_err(path, format!("missing '{k}'"));
    let grid = VoxelGrid::new(dims.ok_or_else(|| missing("dims"))?, spacing.ok_or_else(|| missing("spacing_mm"))?, origin.ok_or_else(|| missing("origin_mm"))?)?;
    let components = components.unwrap_or(1);
    if ![1, 3, 6].contains(&components) {
        return Err(format_err(path, format!("components must be 1, 3 or 6, got {components}")));
    }
    let data = data.ok_or_else(|| missing("data"))?;
    let data = path.parent().unwrap_or(Path::new(".")).join(data);
    Ok(Header { grid, dtype: dtype.ok_or_else(|| missing("dtype"))?, components, data })
}

/// Raw payload as `f64`, `components` values per voxel.
pub fn read_raw(path: &Path) -> Result<(Header, Vec<f64>), IoError> {
    let h = read_header(path)?;
    let bytes = fs::read(&h.data).map_err(io_err(&h.data))?;
    let expected = h.grid.len() * h.components * h.dtype.size();
    if bytes.len() != expected {
        return Err(format_err(&h.data, format!("payload has {} bytes, expected {expected}", bytes.len())));
    }
    let values = match h.dtype {
        DType::U8 => bytes.iter().map(|b| f64::from(*b)).collect(),
        DType::F32 => bytes.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap()))).collect(),
        DType::U32 => bytes.chunks_exact(4).map(|c| f64::from(u32::from_le_bytes(c.try_into().unwrap()))).collect(),
        DType::F64 => bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
    };
    Ok((h, values))
}

fn expect_components(path: &Path, h: &Header, want: usize) -> Result<(), IoError> {
    if h.components == want {
        Ok(())
    } else {
        Err(format_err(path, format!("expected {want} component(s), found {}", h.components)))
    }
}

pub fn read_scalar(path: &Path) -> Result<ScalarVolume, IoError> {
    let (h, v) = read_raw(path)?;
    expect_components(path, &h, 1)?;
    Ok(Volume::new(h.grid, v)?)
}

pub fn read_tensor(path: &Path) -> Result<TensorVolume, IoError> {
    let (h, v) = read_raw(path)?;
    expect_components(path, &h, 6)?;
    let t = v.chunks_exact(6).map(|c| Sym3::from_components(c.try_into().unwrap())).collect();
    Ok(Volume::new(h.grid, t)?)
}

pub fn read_labels(path: &Path) -> Result<LabelVolume, IoError> {
    let (h, v) = read_raw(path)?;
    expect_components(path, &h, 1)?;
    if matches!(h.dtype, DType::F32 | DType::F64) {
        return Err(format_err(path, "label volumes need an integer dtype"));
    }
    Ok(Volume::new(h.grid, v.into_iter().map(|x| x as u32).collect())?)
}

pub fn read_mask(path: &Path) -> Result<MaskVolume, IoError> {
    let (h, v) = read_raw(path)?;
    expect_components(path, &h, 1)?;
    Ok(Volume::new(h.grid, v.into_iter().map(|x| x != 0.0).collect())?)
}

fn fmt3<T: std::fmt::Display>(v: [T; 3]) -> String {
    format!("{} {} {}", v[0], v[1], v[2])
}

/// Writes `<stem>.hdr` and `<stem>.raw` into `dir`; returns the header path.
pub fn write_raw(dir: &Path, stem: &str, grid: &VoxelGrid, dtype: DType, components: usize, payload: &[u8]) -> Result<PathBuf, IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let hdr = dir.join(format!("{stem}.hdr"));
    let raw = dir.join(format!("{stem}.raw"));
    let text = format!(
        "{MAGIC}\ndims {}\nspacing_mm {}\norigin_mm {}\ndtype {}\ncomponents {components}\norder x-fastest\ndata {stem}.raw\n",
        fmt3(grid.dims()),
        fmt3(grid.spacing()),
        fmt3(grid.origin()),
        dtype.name(),
    );
    fs::write(&hdr, text).map_err(io_err(&hdr))?;
    fs::write(&raw, payload).map_err(io_err(&raw))?;
    Ok(hdr)
}

pub fn write_scalar(dir: &Path, stem: &str, v: &ScalarVolume) -> Result<PathBuf, IoError> {
    let bytes: Vec<u8> = v.values().iter().flat_map(|x| (*x as f32).to_le_bytes()).collect();
    write_raw(dir, stem, v.grid(), DType::F32, 1, &bytes)
}

pub fn write_vectors(dir: &Path, stem: &str, grid: &VoxelGrid, v: &[[f64; 3]]) -> Result<PathBuf, IoError> {
    let bytes: Vec<u8> = v.iter().flatten().flat_map(|x| (*x as f32).to_le_bytes()).collect();
    write_raw(dir, stem, grid, DType::F32, 3, &bytes)
}

pub fn write_tensor(dir: &Path, stem: &str, v: &TensorVolume) -> Result<PathBuf, IoError> {
    let bytes: Vec<u8> = v.values().iter().flat_map(|t| t.components()).flat_map(|x| (x as f32).to_le_bytes()).collect();
    write_raw(dir, stem, v.grid(), DType::F32, 6, &bytes)
}

pub fn write_mask(dir: &Path, stem: &str, v: &MaskVolume) -> Result<PathBuf, IoError> {
    let bytes: Vec<u8> = v.values().iter().map(|b| u8::from(*b)).collect();
    write_raw(dir, stem, v.grid(), DType::U8, 1, &bytes)
}

pub fn write_labels(dir: &Path, stem: &str, v: &LabelVolume) -> Result<PathBuf, IoError> {
    let bytes: Vec<u8> = v.values().iter().flat_map(|x| x.to_le_bytes()).collect();
    write_raw(dir, stem, v.grid(), DType::U32, 1, &bytes)
}
