//! Small fixed-size linear algebra used throughout the crate.

/// A point or vector in millimetre world coordinates.
pub type Vec3 = [f64; 3];

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    sqrt(dot(a, a))
}

/// Unit vector along `a`, or `None` for a (near-)zero vector.
pub fn normalize(a: Vec3) -> Option<Vec3> {
    let n = norm(a);
    if n > 1e-300 && n.is_finite() {
        Some(scale(a, 1.0 / n))
    } else {
        None
    }
}

/// Two unit vectors completing `axis` (assumed unit) to a right-handed
/// orthonormal basis.
pub fn perpendicular_basis(axis: Vec3) -> (Vec3, Vec3) {
    // Cross with the coordinate axis least aligned with `axis`.
    let a = [axis[0].abs(), axis[1].abs(), axis[2].abs()];
    let pick = if a[0] <= a[1] && a[0] <= a[2] {
        [1.0, 0.0, 0.0]
    } else if a[1] <= a[2] {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let e1 = normalize(cross(axis, pick)).unwrap_or([1.0, 0.0, 0.0]);
    let e2 = cross(axis, e1);
    (e1, e2)
}

/// Symmetric 3x3 tensor, stored as (xx, yy, zz, xy, xz, yz).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym3 {
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
    pub xy: f64,
    pub xz: f64,
    pub yz: f64,
}

impl Sym3 {
    pub const ZERO: Sym3 = Sym3 { xx: 0.0, yy: 0.0, zz: 0.0, xy: 0.0, xz: 0.0, yz: 0.0 };

    pub const fn new(xx: f64, yy: f64, zz: f64, xy: f64, xz: f64, yz: f64) -> Self {
        Sym3 { xx, yy, zz, xy, xz, yz }
    }

    pub const fn diag(xx: f64, yy: f64, zz: f64) -> Self {
        Sym3 { xx, yy, zz, xy: 0.0, xz: 0.0, yz: 0.0 }
    }

    pub const fn isotropic(s: f64) -> Self {
        Sym3::diag(s, s, s)
    }

    /// Components in storage order (xx, yy, zz, xy, xz, yz).
    pub fn components(&self) -> [f64; 6] {
        [self.xx, self.yy, self.zz, self.xy, self.xz, self.yz]
    }

    pub fn from_components(c: [f64; 6]) -> Self {
        Sym3::new(c[0], c[1], c[2], c[3], c[4], c[5])
    }

    /// Builds `R diag(d) R^T` from an orthonormal frame given by its columns.
    pub fn from_frame(columns: [Vec3; 3], d: Vec3) -> Self {
        let mut m = [[0.0; 3]; 3];
        for (col, &dk) in columns.iter().zip(d.iter()) {
            for (r, row) in m.iter_mut().enumerate() {
                for (c, entry) in row.iter_mut().enumerate() {
                    *entry += dk * col[r] * col[c];
                }
            }
        }
        Sym3::new(m[0][0], m[1][1], m[2][2], m[0][1], m[0][2], m[1][2])
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    pub fn is_diagonal(&self) -> bool {
        self.xy == 0.0 && self.xz == 0.0 && self.yz == 0.0
    }

    pub fn is_finite(&self) -> bool {
        self.components().iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Sym3::new(self.xx * s, self.yy * s, self.zz * s, self.xy * s, self.xz * s, self.yz * s)
    }

    pub fn plus(&self, o: &Sym3) -> Self {
        Sym3::new(
            self.xx + o.xx,
            self.yy + o.yy,
            self.zz + o.zz,
            self.xy + o.xy,
            self.xz + o.xz,
            self.yz + o.yz,
        )
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        [
            self.xx * v[0] + self.xy * v[1] + self.xz * v[2],
            self.xy * v[0] + self.yy * v[1] + self.yz * v[2],
            self.xz * v[0] + self.yz * v[1] + self.zz * v[2],
        ]
    }

    /// Quadratic form `t^T S t`.
    pub fn quad(&self, t: Vec3) -> f64 {
        dot(t, self.mul_vec(t))
    }

    /// Bilinear form `a^T S b`.
    pub fn bilinear(&self, a: Vec3, b: Vec3) -> f64 {
        dot(a, self.mul_vec(b))
    }

    pub fn determinant(&self) -> f64 {
        self.xx * (self.yy * self.zz - self.yz * self.yz)
            - self.xy * (self.xy * self.zz - self.yz * self.xz)
            + self.xz * (self.xy * self.yz - self.yy * self.xz)
    }

    /// Eigenvalues in descending order (closed-form trigonometric method).
    pub fn eigenvalues(&self) -> [f64; 3] {
        let p1 = self.xy * self.xy + self.xz * self.xz + self.yz * self.yz;
        if p1 == 0.0 {
            let mut e = [self.xx, self.yy, self.zz];
            e.sort_by(|a, b| b.total_cmp(a));
            return e;
        }
        let q = self.trace() / 3.0;
        let p2 = (self.xx - q) * (self.xx - q)
            + (self.yy - q) * (self.yy - q)
            + (self.zz - q) * (self.zz - q)
            + 2.0 * p1;
        let p = sqrt(p2 / 6.0);
        let b = Sym3::new(self.xx - q, self.yy - q, self.zz - q, self.xy, self.xz, self.yz)
            .scaled(1.0 / p);
        let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
        let phi = libm::acos(r) / 3.0;
        let e1 = q + 2.0 * p * libm::cos(phi);
        let e3 = q + 2.0 * p * libm::cos(phi + 2.0 * core::f64::consts::PI / 3.0);
        let e2 = 3.0 * q - e1 - e3;
        [e1, e2, e3]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[2]
    }

    /// Positive semi-definiteness, allowing round-off relative to the tensor scale.
    pub fn is_psd(&self) -> bool {
        let scale = self.components().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        self.min_eigenvalue() >= -1e-12 * scale
    }
}
