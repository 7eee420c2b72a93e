//! Dense complex linear algebra helpers shared by the propagators and metrics.

use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64 as C64;

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermiticity_residual(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn unitarity_residual(u: &CMat) -> f64 {
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - CMat::identity(n, n)))
}

/// `⟨a|b⟩` with the first argument conjugated.
pub fn inner(a: &CVec, b: &CVec) -> C64 {
    a.dotc(b)
}

pub fn expectation(op: &CMat, psi: &CVec) -> C64 {
    psi.dotc(&(op * psi))
}

pub fn outer(a: &CVec, b: &CVec) -> CMat {
    a * b.adjoint()
}

/// Eigendecomposition of a Hermitian matrix, `H = V diag(values) V†`.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl HermitianEigen {
    pub fn new(h: &CMat) -> Self {
        // Symmetrize so round-off in the input cannot leak an anti-Hermitian part.
        let hs = (h + h.adjoint()) * C64::new(0.5, 0.0);
        let eig = nalgebra::SymmetricEigen::new(hs);
        HermitianEigen {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }

    /// `exp(-i H t)`.
    pub fn propagator(&self, t: f64) -> CMat {
        let phases: Vec<C64> = self.values.iter().map(|&l| C64::from_polar(1.0, -l * t)).collect();
        let mut vd = self.vectors.clone();
        for (j, mut col) in vd.column_iter_mut().enumerate() {
            col *= phases[j];
        }
        vd * self.vectors.adjoint()
    }
}

/// `exp(-i H t)` for Hermitian `H`.
pub fn expm_hermitian(h: &CMat, t: f64) -> CMat {
    HermitianEigen::new(h).propagator(t)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Sparse triplet form of an operator, used in the hot loops.
#[derive(Clone, Debug)]
pub struct Sparse {
    pub dim: usize,
    pub entries: Vec<(usize, usize, C64)>,
}

impl Sparse {
    pub fn from_dense(m: &CMat) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != ZERO {
                    entries.push((i, j, v));
                }
            }
        }
        Sparse { dim: m.nrows(), entries }
    }

    pub fn apply(&self, x: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|z| *z = ZERO);
        for &(i, j, v) in &self.entries {
            out[i] += v * x[j];
        }
    }

    pub fn adjoint(&self) -> Self {
        Sparse {
            dim: self.dim,
            entries: self.entries.iter().map(|&(i, j, v)| (j, i, v.conj())).collect(),
        }
    }
}
