//! Conductivity fields: tissue lookup, the trace-preserving mapping from
//! diffusion tensors, and the homogeneous fallback outside a heterogeneity box.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::math::{Sym3, Vec3};
use crate::volume::{LabelVolume, ScalarVolume, TensorVolume, VoxelGrid};
use crate::{Error, Result};

/// Traces at or below this value (in the diffusion tensor's own units) fall
/// back to isotropic conductivity.
pub const TRACE_EPSILON: f64 = 1e-9;

pub const REQUIRED_TISSUES: [&str; 4] = ["gray", "white", "csf", "background"];

#[derive(Debug, Clone, PartialEq)]
pub struct TissueClass {
    pub label: u32,
    pub name: String,
    /// Isotropic conductivity, S/mm.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TissueTable {
    classes: Vec<TissueClass>,
}

impl TissueTable {
    pub fn new(classes: Vec<TissueClass>) -> Result<Self> {
        for (k, c) in classes.iter().enumerate() {
            if !(c.sigma.is_finite() && c.sigma > 0.0) {
                return Err(Error::InvalidTissueTable(format!(
                    "conductivity of '{}' must be positive and finite",
                    c.name
                )));
            }
            if classes[..k].iter().any(|o| o.label == c.label) {
                return Err(Error::InvalidTissueTable(format!("duplicate label {}", c.label)));
            }
        }
        for name in REQUIRED_TISSUES {
            if !classes.iter().any(|c| c.name == name) {
                return Err(Error::InvalidTissueTable(format!("missing tissue class '{name}'")));
            }
        }
        Ok(TissueTable { classes })
    }

    pub fn classes(&self) -> &[TissueClass] {
        &self.classes
    }

    pub fn sigma(&self, label: u32) -> Result<f64> {
        self.classes
            .iter()
            .find(|c| c.label == label)
            .map(|c| c.sigma)
            .ok_or(Error::UnknownLabel(label))
    }

    pub fn sigma_by_name(&self, name: &str) -> Option<f64> {
        self.classes.iter().find(|c| c.name == name).map(|c| c.sigma)
    }
}

pub fn isotropic_from_labels(labels: &LabelVolume, table: &TissueTable) -> Result<ScalarVolume> {
    let values = labels.values().iter().map(|&l| table.sigma(l)).collect::<Result<Vec<_>>>()?;
    ScalarVolume::new(*labels.grid(), values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConductivityTensors {
    pub tensors: TensorVolume,
    /// Voxels whose diffusion trace was too small and got `sigma_iso * I`.
    pub isotropic_fallbacks: usize,
}

/// `sigma = 3 * sigma_iso * D / tr(D)` per voxel, so `tr(sigma) = 3 * sigma_iso`.
pub fn tensor_from_diffusion(sigma_iso: &ScalarVolume, diffusion: &TensorVolume) -> Result<ConductivityTensors> {
    if !sigma_iso.grid().matches(diffusion.grid()) {
        return Err(Error::GridMismatch);
    }
    sigma_iso.check_finite()?;
    let mut isotropic_fallbacks = 0;
    let mut values = Vec::with_capacity(sigma_iso.values().len());
    for (voxel, (&s, d)) in sigma_iso.values().iter().zip(diffusion.values()).enumerate() {
        if !d.is_finite() {
            return Err(Error::NonFinite(voxel));
        }
        if !d.is_psd() {
            return Err(Error::NotPositiveSemiDefinite { voxel, min_eigenvalue: d.min_eigenvalue() });
        }
        let tr = d.trace();
        if tr <= TRACE_EPSILON {
            isotropic_fallbacks += 1;
            values.push(Sym3::isotropic(s));
        } else {
            values.push(d.scaled(3.0 * s / tr));
        }
    }
    Ok(ConductivityTensors { tensors: TensorVolume::new(*sigma_iso.grid(), values)?, isotropic_fallbacks })
}

/// Keeps tensors strictly inside the axis-aligned cube `|x - center|_inf < half_width`
/// and replaces the rest by `sigma_background * I`.
pub fn restrict_heterogeneity_box(
    tensors: &TensorVolume,
    center: Vec3,
    half_width: f64,
    sigma_background: f64,
) -> TensorVolume {
    let grid = *tensors.grid();
    let values = tensors
        .values()
        .iter()
        .enumerate()
        .map(|(idx, t)| {
            let p = grid.center_of(idx);
            let inside = (0..3).all(|a| (p[a] - center[a]).abs() < half_width);
            if inside { *t } else { Sym3::isotropic(sigma_background) }
        })
        .collect();
    TensorVolume::new(grid, values).expect("same grid")
}

pub fn homogeneous(grid: VoxelGrid, sigma: f64) -> TensorVolume {
    TensorVolume::filled(grid, Sym3::isotropic(sigma))
}

pub fn from_isotropic(sigma_iso: &ScalarVolume) -> TensorVolume {
    sigma_iso.map(|&s| Sym3::isotropic(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn table() -> TissueTable {
        let c = |label, name: &str, sigma| TissueClass { label, name: name.into(), sigma };
        TissueTable::new(vec![
            c(0, "background", 0.0002),
            c(1, "gray", 0.00023),
            c(2, "white", 0.00014),
            c(3, "csf", 0.00178),
        ])
        .unwrap()
    }

    fn grid() -> VoxelGrid {
        VoxelGrid::new([3, 4, 5], [1.0; 3], [0.0; 3]).unwrap()
    }

    #[test]
    fn lookup() {
        let t = table();
        let white = LabelVolume::filled(grid(), 2);
        let s = isotropic_from_labels(&white, &t).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.00014));
        let mixed = LabelVolume::from_fn(grid(), |p| (p[0] as u32 + p[2] as u32) % 4);
        let s = isotropic_from_labels(&mixed, &t).unwrap();
        for (l, v) in mixed.values().iter().zip(s.values()) {
            assert_eq!(*v, t.sigma(*l).unwrap());
        }
        let bad = LabelVolume::filled(grid(), 99);
        assert_eq!(isotropic_from_labels(&bad, &t), Err(Error::UnknownLabel(99)));
    }

    #[test]
    fn table_requires_named_tissues() {
        let c = TissueClass { label: 1, name: "gray".into(), sigma: 0.1 };
        assert!(TissueTable::new(vec![c.clone()]).is_err());
        let mut classes = table().classes().to_vec();
        classes[1].sigma = 0.0;
        assert!(TissueTable::new(classes).is_err());
    }

    #[test]
    fn isotropic_diffusion_gives_isotropic_conductivity() {
        let s = ScalarVolume::filled(grid(), 0.3);
        let d = TensorVolume::filled(grid(), Sym3::isotropic(7e-4));
        let out = tensor_from_diffusion(&s, &d).unwrap();
        assert_eq!(out.isotropic_fallbacks, 0);
        for t in out.tensors.values() {
            assert!((t.xx - 0.3).abs() < 1e-15 && (t.yy - 0.3).abs() < 1e-15 && t.xy == 0.0);
        }
    }

    #[test]
    fn direct_substitution() {
        let s = ScalarVolume::filled(grid(), 0.2);
        let d = TensorVolume::filled(grid(), Sym3::diag(2.0, 1.0, 0.0).scaled(5e-4));
        let t = tensor_from_diffusion(&s, &d).unwrap().tensors.values()[0];
        assert!((t.xx - 0.4).abs() < 1e-15);
        assert!((t.yy - 0.2).abs() < 1e-15);
        assert_eq!(t.zz, 0.0);
    }

    #[test]
    fn small_trace_falls_back() {
        let s = ScalarVolume::filled(grid(), 0.2);
        let mut d = TensorVolume::filled(grid(), Sym3::diag(1.0, 1.0, 1.0));
        d.values_mut()[3] = Sym3::ZERO;
        let out = tensor_from_diffusion(&s, &d).unwrap();
        assert_eq!(out.isotropic_fallbacks, 1);
        assert_eq!(out.tensors.values()[3], Sym3::isotropic(0.2));
    }

    #[test]
    fn heterogeneity_box() {
        let g = VoxelGrid::centered_cube(31, 2.0, [0.0; 3]).unwrap();
        let t = TensorVolume::filled(g, Sym3::diag(3.0, 2.0, 1.0));
        assert_eq!(restrict_heterogeneity_box(&t, [0.0; 3], 1000.0, 0.5), t);
        let zero = restrict_heterogeneity_box(&t, [0.0; 3], 0.0, 0.5);
        assert!(zero.values().iter().all(|v| *v == Sym3::isotropic(0.5)));
        let center = [1.0, -1.0, 0.5];
        let boxed = restrict_heterogeneity_box(&t, center, 25.0, 0.5);
        for (idx, v) in boxed.values().iter().enumerate() {
            let p = g.center_of(idx);
            if (0..3).any(|a| (p[a] - center[a]).abs() > 25.0) {
                assert_eq!(*v, Sym3::isotropic(0.5));
            } else if (0..3).all(|a| (p[a] - center[a]).abs() < 25.0) {
                assert_eq!(*v, Sym3::diag(3.0, 2.0, 1.0));
            }
        }
    }

    fn psd_tensor() -> impl Strategy<Value = Sym3> {
        (prop::array::uniform3(0.0..3.0f64), -3.1..3.1f64, -1.5..1.5f64, -3.1..3.1f64).prop_map(
            |(d, a, b, c)| {
                // frame from three rotations
                let (sa, ca) = (libm::sin(a), libm::cos(a));
                let (sb, cb) = (libm::sin(b), libm::cos(b));
                let (sc, cc) = (libm::sin(c), libm::cos(c));
                let r = [
                    [ca * cb, sa * cb, -sb],
                    [ca * sb * sc - sa * cc, sa * sb * sc + ca * cc, cb * sc],
                    [ca * sb * cc + sa * sc, sa * sb * cc - ca * sc, cb * cc],
                ];
                Sym3::from_frame(r, [d[0] + 1e-3, d[1], d[2]])
            },
        )
    }

    proptest! {
        #[test]
        fn trace_is_preserved(d in psd_tensor(), s in 1e-5..1.0f64) {
            let g = VoxelGrid::new([1, 1, 1], [1.0; 3], [0.0; 3]).unwrap();
            let out = tensor_from_diffusion(&ScalarVolume::filled(g, s), &TensorVolume::filled(g, d)).unwrap();
            let t = out.tensors.values()[0];
            prop_assert!((t.trace() - 3.0 * s).abs() <= 1e-12 * 3.0 * s);
            prop_assert!(t.is_psd());
        }

        #[test]
        fn scale_free_in_diffusion(d in psd_tensor(), c in 1e-3..1e3f64) {
            let g = VoxelGrid::new([1, 1, 1], [1.0; 3], [0.0; 3]).unwrap();
            let s = ScalarVolume::filled(g, 0.2);
            let a = tensor_from_diffusion(&s, &TensorVolume::filled(g, d)).unwrap().tensors.values()[0];
            let b = tensor_from_diffusion(&s, &TensorVolume::filled(g, d.scaled(c))).unwrap().tensors.values()[0];
            for (x, y) in a.components().iter().zip(b.components()) {
                prop_assert!((x - y).abs() <= 1e-12 * 0.6);
            }
        }
    }
}
