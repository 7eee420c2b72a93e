//! Logical process tomography by linear inversion and χ-matrix fidelities.

use nalgebra::{Matrix2, Matrix4, Vector4};

use crate::codespace::State;
use crate::error::{EstError, Result};
use crate::linalg::{CMat, C64, I, ONE, ZERO};

/// Process matrix in the basis `{I, X, Y, Z}`, normalized to unit trace.
#[derive(Clone, Debug, PartialEq)]
pub struct ChiMatrix(pub Matrix4<C64>);

#[derive(Clone, Debug)]
pub struct TomographyResult {
    pub chi: ChiMatrix,
    /// Smallest logical weight among the four channel outputs before renormalization.
    pub min_weight: f64,
}

pub fn paulis() -> [Matrix2<C64>; 4] {
    [
        Matrix2::identity(),
        Matrix2::new(ZERO, ONE, ONE, ZERO),
        Matrix2::new(ZERO, -I, I, ZERO),
        Matrix2::new(ONE, ZERO, ZERO, -ONE),
    ]
}

/// Tomography input states `|0⟩, |1⟩, |+⟩, |+i⟩`.
pub fn input_states() -> [Matrix2<C64>; 4] {
    let h = C64::new(0.5, 0.0);
    [
        Matrix2::new(ONE, ZERO, ZERO, ZERO),
        Matrix2::new(ZERO, ZERO, ZERO, ONE),
        Matrix2::new(h, h, h, h),
        Matrix2::new(h, -I * h, I * h, h),
    ]
}

fn vec_op(p: &Matrix2<C64>) -> Vector4<C64> {
    // |P⟩⟩ = Σ_i |i⟩ ⊗ P|i⟩, index 2i + a
    Vector4::new(p[(0, 0)], p[(1, 0)], p[(0, 1)], p[(1, 1)])
}

fn chi_from_choi(j: &Matrix4<C64>) -> ChiMatrix {
    let ps = paulis().map(|p| vec_op(&p));
    let mut chi = Matrix4::zeros();
    for m in 0..4 {
        for n in 0..4 {
            chi[(m, n)] = ps[m].dotc(&(j * ps[n])) * 0.25;
        }
    }
    let tr = chi.trace();
    ChiMatrix(chi / tr)
}

/// Reconstructs χ from the channel's action on the four input states. Outputs
/// with partial logical weight are renormalized; the smallest weight is reported.
pub fn process_tomography<F>(mut channel: F) -> Result<TomographyResult>
where
    F: FnMut(&Matrix2<C64>) -> Result<Matrix2<C64>>,
{
    let mut outs = Vec::with_capacity(4);
    let mut min_weight = f64::INFINITY;
    for rho in input_states() {
        let out = channel(&rho)?;
        let w = out.trace().re;
        if w < 1e-6 {
            return Err(EstError::Undefined(format!("channel output logical weight {w:.2e}")));
        }
        min_weight = min_weight.min(w);
        outs.push(out / C64::new(w, 0.0));
    }
    let (r0, r1, rp, ri) = (outs[0], outs[1], outs[2], outs[3]);
    let diag = r0 + r1;
    let r01 = rp + ri * I - diag * C64::new(0.5, 0.5);
    let r10 = rp - ri * I - diag * C64::new(0.5, -0.5);
    let blocks = [[r0, r01], [r10, r1]];
    let mut j = Matrix4::zeros();
    for (i, row) in blocks.iter().enumerate() {
        for (k, b) in row.iter().enumerate() {
            for a in 0..2 {
                for c in 0..2 {
                    j[(2 * i + a, 2 * k + c)] = b[(a, c)];
                }
            }
        }
    }
    Ok(TomographyResult { chi: chi_from_choi(&j), min_weight })
}

pub fn unitary_chi(u: &Matrix2<C64>) -> ChiMatrix {
    let v = vec_op(u);
    chi_from_choi(&(v * v.adjoint()))
}

/// `Re Tr(χ χ_target)`.
pub fn process_fidelity(chi: &ChiMatrix, target: &ChiMatrix) -> f64 {
    (chi.0 * target.0).trace().re
}

impl ChiMatrix {
    pub fn to_text(&self, label: &str) -> String {
        let names = ["I", "X", "Y", "Z"];
        let mut s = format!("# chi {label} (rows/cols I,X,Y,Z; entries re+im*i)\n");
        s.push_str("#,I,X,Y,Z\n");
        for m in 0..4 {
            let row: Vec<String> = (0..4)
                .map(|n| {
                    let z = self.0[(m, n)];
                    format!("{}{:+}i", z.re, z.im)
                })
                .collect();
            s.push_str(&format!("{},{}\n", names[m], row.join(",")));
        }
        s
    }
}

/// Logical 2×2 block `⟨w_μ|ρ|w_ν⟩` of a joint-space density matrix.
pub fn logical_density(rho: &CMat, w0: &State, w1: &State) -> Matrix2<C64> {
    let r0 = rho * w0;
    let r1 = rho * w1;
    Matrix2::new(w0.dotc(&r0), w0.dotc(&r1), w1.dotc(&r0), w1.dotc(&r1))
}

/// `Σ ρ_μν |w_μ⟩⟨w_ν|`.
pub fn embed_density(rho: &Matrix2<C64>, w0: &State, w1: &State) -> CMat {
    let ws = [w0, w1];
    let d = w0.len();
    let mut out = CMat::zeros(d, d);
    for m in 0..2 {
        for n in 0..2 {
            out += ws[m] * ws[n].adjoint() * rho[(m, n)];
        }
    }
    out
}
