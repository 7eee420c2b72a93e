//! The binomial kitten code, logical states, and static or instantaneous
//! code and error subspaces.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{EstError, Result};
use crate::hilbert::HilbertConfig;
use crate::linalg::{outer, unitarity_residual, CMat, CVec, C64, I};

pub type State = CVec;

/// Names of the six cardinal points, in the order returned by [`cardinal_states`].
pub const CARDINAL_LABELS: [&str; 6] = ["+Z", "-Z", "+X", "-X", "+Y", "-Y"];

/// Bloch angles `(θ, φ)` of the cardinal points, same order as [`CARDINAL_LABELS`].
pub const CARDINAL_ANGLES: [(f64, f64); 6] = [
    (0.0, 0.0),
    (std::f64::consts::PI, 0.0),
    (std::f64::consts::FRAC_PI_2, 0.0),
    (std::f64::consts::FRAC_PI_2, std::f64::consts::PI),
    (std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2),
    (std::f64::consts::FRAC_PI_2, -std::f64::consts::FRAC_PI_2),
];

/// Two orthonormal words with their projector and logical Paulis.
#[derive(Clone, Debug)]
pub struct CodeSubspace {
    pub word0: State,
    pub word1: State,
    pub projector: CMat,
    /// `(X, Y, Z)` on the span.
    pub paulis: [CMat; 3],
}

impl CodeSubspace {
    pub fn from_words(word0: State, word1: State) -> Result<Self> {
        if word0.len() != word1.len() {
            return Err(EstError::DimensionMismatch { expected: word0.len(), got: word1.len() });
        }
        let ortho = word0.dotc(&word1).norm();
        let norms = (word0.norm() - 1.0).abs().max((word1.norm() - 1.0).abs());
        if ortho > 1e-10 || norms > 1e-10 {
            return Err(EstError::InvalidConfig(format!(
                "code words are not orthonormal (overlap {ortho:.2e}, norm error {norms:.2e})"
            )));
        }
        let p00 = outer(&word0, &word0);
        let p11 = outer(&word1, &word1);
        let p01 = outer(&word0, &word1);
        let p10 = p01.adjoint();
        let x = &p01 + &p10;
        let y = &p01 * (-I) + &p10 * I;
        let z = &p00 - &p11;
        Ok(CodeSubspace { projector: p00 + p11, paulis: [x, y, z], word0, word1 })
    }

    pub fn dim(&self) -> usize {
        self.word0.len()
    }

    pub fn words(&self) -> [&State; 2] {
        [&self.word0, &self.word1]
    }

    /// Logical coordinates `(⟨w0|ψ⟩, ⟨w1|ψ⟩)`.
    pub fn coordinates(&self, psi: &State) -> [C64; 2] {
        [self.word0.dotc(psi), self.word1.dotc(psi)]
    }

    pub fn embed(&self, c0: C64, c1: C64) -> State {
        &self.word0 * c0 + &self.word1 * c1
    }

    /// Bloch vector of the (not necessarily normalized) component of `psi` in the span,
    /// normalized by that component's weight.
    pub fn bloch_vector(&self, psi: &State) -> Option<[f64; 3]> {
        let [c0, c1] = self.coordinates(psi);
        let w = c0.norm_sqr() + c1.norm_sqr();
        if w < 1e-300 {
            return None;
        }
        let x = 2.0 * (c0.conj() * c1).re / w;
        let y = 2.0 * (c0.conj() * c1).im / w;
        let z = (c0.norm_sqr() - c1.norm_sqr()) / w;
        Some([x, y, z])
    }
}

pub fn kitten_code(cfg: &HilbertConfig) -> Result<CodeSubspace> {
    cfg.validate()?;
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    let w0 = cfg.basis(0, 0) * s + cfg.basis(4, 0) * s;
    let w1 = cfg.basis(2, 0);
    CodeSubspace::from_words(w0, w1)
}

/// `cos(θ/2)|w0⟩ + e^{iφ} sin(θ/2)|w1⟩`.
pub fn logical_state(code: &CodeSubspace, theta: f64, phi: f64) -> State {
    let c0 = C64::new((theta / 2.0).cos(), 0.0);
    let c1 = C64::from_polar((theta / 2.0).sin(), phi);
    let psi = code.embed(c0, c1);
    let n = psi.norm();
    psi / C64::new(n, 0.0)
}

pub fn cardinal_states(code: &CodeSubspace) -> Vec<State> {
    CARDINAL_ANGLES.iter().map(|&(t, p)| logical_state(code, t, p)).collect()
}

/// Image of `code` under the unitary `u`; Paulis are conjugated, `U σ U†`.
pub fn instantaneous_subspace(code: &CodeSubspace, u: &CMat) -> Result<CodeSubspace> {
    if u.nrows() != code.dim() || u.ncols() != code.dim() {
        return Err(EstError::DimensionMismatch { expected: code.dim(), got: u.nrows() });
    }
    let r = unitarity_residual(u);
    if r > 1e-8 {
        return Err(EstError::NotUnitary(r));
    }
    let ud = u.adjoint();
    let [x, y, z] = &code.paulis;
    Ok(CodeSubspace {
        word0: u * &code.word0,
        word1: u * &code.word1,
        projector: u * &code.projector * &ud,
        paulis: [u * x * &ud, u * y * &ud, u * z * &ud],
    })
}

/// Span of `E|w0⟩, E|w1⟩`, orthonormalized with `E|w0⟩` as the anchor.
pub fn error_subspace(code: &CodeSubspace, e: &CMat) -> Result<CodeSubspace> {
    let (w0, w1) = error_words(&code.word0, &code.word1, e)?;
    CodeSubspace::from_words(w0, w1)
}

/// Normalized, Gram–Schmidt orthonormalized error words.
pub fn error_words(word0: &State, word1: &State, e: &CMat) -> Result<(State, State)> {
    let v0 = e * word0;
    let v1 = e * word1;
    let n0 = v0.norm();
    let n1 = v1.norm();
    if n0 < 1e-10 || n1 < 1e-10 {
        return Err(EstError::RankDeficient(format!(
            "error operator annihilates a code word (norms {n0:.2e}, {n1:.2e})"
        )));
    }
    let e0 = v0 / C64::new(n0, 0.0);
    let r = &v1 - &e0 * e0.dotc(&v1);
    let nr = r.norm();
    if nr < 1e-10 * n1 {
        return Err(EstError::RankDeficient("error images of the code words are parallel".into()));
    }
    Ok((e0, r / C64::new(nr, 0.0)))
}

/// Amplitudes as `index,re,im` lines.
pub fn state_to_text(psi: &State) -> String {
    crate::io::csv_table(
        "index,re,im",
        psi.iter().enumerate().map(|(i, c)| vec![i.to_string(), format!("{:.17e}", c.re), format!("{:.17e}", c.im)]),
    )
}
