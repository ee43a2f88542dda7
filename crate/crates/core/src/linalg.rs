//! Small fixed-size vector and matrix helpers.
//!
//! All fields live in at most two spatial dimensions, so vectors are `[f64; 2]`
//! (the second component is identically zero in 1D) and symmetric matrices are
//! stored as three scalars.

/// Per-cell vector quantity. In 1D the `y` component is kept at zero.
pub type Vec2 = [f64; 2];

pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn norm_sq(a: Vec2) -> f64 {
    dot(a, a)
}

pub fn scale(a: Vec2, s: f64) -> Vec2 {
    [a[0] * s, a[1] * s]
}

pub fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

/// Symmetric matrix in at most two dimensions.
///
/// In 1D only `xx` is meaningful; `xy` and `yy` stay zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymMat {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl SymMat {
    pub const ZERO: SymMat = SymMat { xx: 0.0, xy: 0.0, yy: 0.0 };

    pub fn identity(dim: usize) -> SymMat {
        SymMat { xx: 1.0, xy: 0.0, yy: if dim == 2 { 1.0 } else { 0.0 } }
    }

    /// Symmetric outer product v (x) v.
    pub fn outer(v: Vec2) -> SymMat {
        SymMat { xx: v[0] * v[0], xy: v[0] * v[1], yy: v[1] * v[1] }
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    /// Quadratic form xi . M xi.
    pub fn quad_form(&self, xi: Vec2) -> f64 {
        self.xx * xi[0] * xi[0] + 2.0 * self.xy * xi[0] * xi[1] + self.yy * xi[1] * xi[1]
    }

    /// Frobenius inner product M : N.
    pub fn frob(&self, other: &SymMat) -> f64 {
        self.xx * other.xx + self.yy * other.yy + 2.0 * self.xy * other.xy
    }

    pub fn frob_norm_sq(&self) -> f64 {
        self.frob(self)
    }

    /// Smallest eigenvalue; closed form since the matrix is at most 2x2.
    pub fn min_eigenvalue(&self, dim: usize) -> f64 {
        if dim == 1 {
            self.xx
        } else {
            let mean = 0.5 * (self.xx + self.yy);
            let half_gap = 0.5 * (self.xx - self.yy);
            mean - (half_gap * half_gap + self.xy * self.xy).sqrt()
        }
    }

    /// Deviatoric (trace-free) part relative to `dim`.
    pub fn deviatoric(&self, dim: usize) -> SymMat {
        let mean = self.trace() / dim as f64;
        SymMat {
            xx: self.xx - mean,
            xy: self.xy,
            yy: if dim == 2 { self.yy - mean } else { 0.0 },
        }
    }

    pub fn scaled(&self, s: f64) -> SymMat {
        SymMat { xx: self.xx * s, xy: self.xy * s, yy: self.yy * s }
    }

    pub fn plus(&self, other: &SymMat) -> SymMat {
        SymMat { xx: self.xx + other.xx, xy: self.xy + other.xy, yy: self.yy + other.yy }
    }

    pub fn minus(&self, other: &SymMat) -> SymMat {
        SymMat { xx: self.xx - other.xx, xy: self.xy - other.xy, yy: self.yy - other.yy }
    }

    /// Row `i` as a vector (valid for i in 0..2).
    pub fn row(&self, i: usize) -> Vec2 {
        if i == 0 {
            [self.xx, self.xy]
        } else {
            [self.xy, self.yy]
        }
    }
}

/// General (not necessarily symmetric) 2x2 matrix, `g[i][j] = d u_i / d x_j`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[0.0; 2]; 2]);

    pub fn sym(&self) -> SymMat {
        SymMat {
            xx: self.0[0][0],
            xy: 0.5 * (self.0[0][1] + self.0[1][0]),
            yy: self.0[1][1],
        }
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }
}
