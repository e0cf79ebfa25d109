//! Regular voxel grids and the fields stored on them.
//!
//! Values are cell-centered and stored x-fastest: voxel `(i, j, k)` lives at
//! linear index `i + nx * (j + ny * k)` and its center sits at
//! `origin + (i, j, k) * spacing`.

use alloc::vec::Vec;

use crate::math::{Sym3, Vec3};
use crate::{Error, Result};

/// Slack, in fractional voxel units, tolerated at the edge of the sampled hull.
const HULL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    spacing: Vec3,
    origin: Vec3,
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3], spacing: Vec3, origin: Vec3) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidGrid(alloc::format!("dims must be >= 1, got {dims:?}")));
        }
        if spacing.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::InvalidGrid(alloc::format!(
                "spacing must be positive and finite, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGrid(alloc::format!("origin must be finite, got {origin:?}")));
        }
        if dims.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n)).is_none() {
            return Err(Error::InvalidGrid("voxel count overflows".into()));
        }
        Ok(VoxelGrid { dims, spacing, origin })
    }

    /// Cubic grid of `n` voxels per axis at isotropic spacing `h`, centered on `center`.
    pub fn centered_cube(n: usize, h: f64, center: Vec3) -> Result<Self> {
        let half = (n as f64 - 1.0) * h / 2.0;
        VoxelGrid::new([n; 3], [h; 3], [center[0] - half, center[1] - half, center[2] - half])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> Vec3 {
        self.spacing
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    #[inline]
    pub fn linear(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// Linear stride of one step along `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        }
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    #[inline]
    pub fn center_of(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.ijk(idx);
        self.center(i, j, k)
    }

    /// Fractional voxel index of a world point; not clamped.
    pub fn world_to_index(&self, p: Vec3) -> Vec3 {
        [
            (p[0] - self.origin[0]) / self.spacing[0],
            (p[1] - self.origin[1]) / self.spacing[1],
            (p[2] - self.origin[2]) / self.spacing[2],
        ]
    }

    pub fn index_to_world(&self, f: Vec3) -> Vec3 {
        [
            self.origin[0] + f[0] * self.spacing[0],
            self.origin[1] + f[1] * self.spacing[1],
            self.origin[2] + f[2] * self.spacing[2],
        ]
    }

    /// Whether `p` lies in the convex hull of the voxel centers.
    pub fn in_hull(&self, p: Vec3) -> bool {
        let f = self.world_to_index(p);
        (0..3).all(|a| f[a] >= -HULL_SLACK && f[a] <= (self.dims[a] - 1) as f64 + HULL_SLACK)
    }

    /// Nearest voxel to `p`, or `None` when `p` falls outside every voxel cell.
    pub fn nearest(&self, p: Vec3) -> Option<[usize; 3]> {
        let f = self.world_to_index(p);
        let mut out = [0usize; 3];
        for a in 0..3 {
            let r = libm::floor(f[a] + 0.5);
            if r < 0.0 || r > (self.dims[a] - 1) as f64 {
                return None;
            }
            out[a] = r as usize;
        }
        Some(out)
    }

    /// Whether `i` is on the outermost voxel layer.
    pub fn on_boundary(&self, idx: usize) -> bool {
        let c = self.ijk(idx);
        (0..3).any(|a| c[a] == 0 || c[a] + 1 == self.dims[a])
    }

    /// Grids agree in dims exactly and in spacing/origin to round-off.
    pub fn matches(&self, other: &VoxelGrid) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
        self.dims == other.dims
            && (0..3).all(|a| close(self.spacing[a], other.spacing[a]) && close(self.origin[a], other.origin[a]))
    }
}

/// A field of one value per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    grid: VoxelGrid,
    values: Vec<T>,
}

pub type ScalarVolume = Volume<f64>;
pub type TensorVolume = Volume<Sym3>;
pub type MaskVolume = Volume<bool>;
pub type LabelVolume = Volume<u32>;

impl<T> Volume<T> {
    pub fn new(grid: VoxelGrid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::SizeMismatch { expected: grid.len(), actual: values.len() });
        }
        Ok(Volume { grid, values })
    }

    pub fn from_fn(grid: VoxelGrid, mut f: impl FnMut(Vec3) -> T) -> Self {
        let values = (0..grid.len()).map(|idx| f(grid.center_of(idx))).collect();
        Volume { grid, values }
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> &T {
        &self.values[self.grid.linear(i, j, k)]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Volume<U> {
        Volume { grid: self.grid, values: self.values.iter().map(f).collect() }
    }
}

impl<T: Clone> Volume<T> {
    pub fn filled(grid: VoxelGrid, value: T) -> Self {
        Volume { grid, values: alloc::vec![value; grid.len()] }
    }
}

impl ScalarVolume {
    /// First voxel holding a non-finite value, if any.
    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(idx) => Err(Error::NonFinite(idx)),
            None => Ok(()),
        }
    }

    /// Trilinear interpolation of the eight voxel centers surrounding `p`.
    ///
    /// Axes with a single voxel are treated as constant along that axis.
    pub fn trilinear(&self, p: Vec3) -> Result<f64> {
        let g = &self.grid;
        let f = g.world_to_index(p);
        let mut base = [0usize; 3];
        let mut t = [0.0f64; 3];
        for a in 0..3 {
            let n = g.dims[a];
            let hi = (n - 1) as f64;
            if !(f[a] >= -HULL_SLACK && f[a] <= hi + HULL_SLACK) {
                return Err(Error::OutOfDomain(p[0], p[1], p[2]));
            }
            if n == 1 {
                continue;
            }
            let fa = f[a].clamp(0.0, hi);
            let i0 = (libm::floor(fa) as usize).min(n - 2);
            base[a] = i0;
            t[a] = fa - i0 as f64;
        }
        let step = [
            usize::from(g.dims[0] > 1),
            usize::from(g.dims[1] > 1) * g.stride(1),
            usize::from(g.dims[2] > 1) * g.stride(2),
        ];
        let idx0 = g.linear(base[0], base[1], base[2]);
        let v = &self.values;
        let c00 = v[idx0] * (1.0 - t[0]) + v[idx0 + step[0]] * t[0];
        let c10 = v[idx0 + step[1]] * (1.0 - t[0]) + v[idx0 + step[1] + step[0]] * t[0];
        let c01 = v[idx0 + step[2]] * (1.0 - t[0]) + v[idx0 + step[2] + step[0]] * t[0];
        let c11 = v[idx0 + step[2] + step[1]] * (1.0 - t[0])
            + v[idx0 + step[2] + step[1] + step[0]] * t[0];
        let c0 = c00 * (1.0 - t[1]) + c10 * t[1];
        let c1 = c01 * (1.0 - t[1]) + c11 * t[1];
        Ok(c0 * (1.0 - t[2]) + c1 * t[2])
    }
}

impl TensorVolume {
    /// Rejects non-finite or indefinite tensors (conductivity inputs).
    pub fn check_conductivity(&self) -> Result<()> {
        for (voxel, s) in self.values.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::NonFinite(voxel));
            }
            if !s.is_psd() {
                return Err(Error::NotPositiveSemiDefinite { voxel, min_eigenvalue: s.min_eigenvalue() });
            }
        }
        Ok(())
    }
}

impl MaskVolume {
    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&b| b).count()
    }
}
