//! Minimal 2x2 complex matrix arithmetic for qubit states and effects.
//!
//! Everything here is closed form; positivity checks use the analytic
//! eigenvalues of a Hermitian 2x2 matrix rather than an iterative solver.

use num_complex::Complex64;
use std::ops::{Add, Mul, Sub};

/// Row-major 2x2 complex matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2 {
    pub e: [[Complex64; 2]; 2],
}

impl Mat2 {
    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Self { e: [[a, b], [c, d]] }
    }

    pub fn zero() -> Self {
        let z = Complex64::new(0.0, 0.0);
        Self::new(z, z, z, z)
    }

    pub fn identity() -> Self {
        let z = Complex64::new(0.0, 0.0);
        let o = Complex64::new(1.0, 0.0);
        Self::new(o, z, z, o)
    }

    /// Outer product |v><v| of a two-component vector.
    pub fn outer(v: [Complex64; 2]) -> Self {
        Self::new(
            v[0] * v[0].conj(),
            v[0] * v[1].conj(),
            v[1] * v[0].conj(),
            v[1] * v[1].conj(),
        )
    }

    pub fn trace(&self) -> Complex64 {
        self.e[0][0] + self.e[1][1]
    }

    /// Trace of the product `self * rhs`, without forming the product.
    pub fn trace_mul(&self, rhs: &Self) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..2 {
            for j in 0..2 {
                acc += self.e[i][j] * rhs.e[j][i];
            }
        }
        acc
    }

    pub fn adjoint(&self) -> Self {
        Self::new(
            self.e[0][0].conj(),
            self.e[1][0].conj(),
            self.e[0][1].conj(),
            self.e[1][1].conj(),
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        let s = Complex64::new(s, 0.0);
        Self::new(self.e[0][0] * s, self.e[0][1] * s, self.e[1][0] * s, self.e[1][1] * s)
    }

    /// Largest absolute deviation from Hermiticity, max_ij |M_ij - conj(M_ji)|.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.e[i][j] - self.e[j][i].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Eigenvalues of a Hermitian matrix, ascending. Closed form:
    /// mean of the diagonal plus/minus the radius sqrt(((a-d)/2)^2 + |b|^2).
    ///
    /// Only meaningful when the matrix is (numerically) Hermitian.
    pub fn hermitian_eigenvalues(&self) -> (f64, f64) {
        let a = self.e[0][0].re;
        let d = self.e[1][1].re;
        let mean = 0.5 * (a + d);
        let half_gap = 0.5 * (a - d);
        let radius = (half_gap * half_gap + self.e[0][1].norm_sqr()).sqrt();
        (mean - radius, mean + radius)
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        Mat2::new(
            self.e[0][0] + rhs.e[0][0],
            self.e[0][1] + rhs.e[0][1],
            self.e[1][0] + rhs.e[1][0],
            self.e[1][1] + rhs.e[1][1],
        )
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        Mat2::new(
            self.e[0][0] - rhs.e[0][0],
            self.e[0][1] - rhs.e[0][1],
            self.e[1][0] - rhs.e[1][0],
            self.e[1][1] - rhs.e[1][1],
        )
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let mut out = Mat2::zero();
        for i in 0..2 {
            for j in 0..2 {
                out.e[i][j] = self.e[i][0] * rhs.e[0][j] + self.e[i][1] * rhs.e[1][j];
            }
        }
        out
    }
}
