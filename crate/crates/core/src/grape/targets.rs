//! Gate targets on the kitten code: logical gates with their error-space images,
//! the recovery (AQEC) map, and encode/decode maps.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::codespace::{error_subspace, logical_state, CodeSubspace, State, CARDINAL_ANGLES};
use crate::error::{EstError, Result};
use crate::hilbert::{fock_operators, HilbertConfig};
use crate::linalg::{CMat, C64, HermitianEigen, ONE, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mode {
    /// Code-space fidelity only.
    Ord,
    /// Code-space and error-space fidelity.
    Le,
    /// Code- and error-space fidelity plus the ET cost.
    Est,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Ord => "ORD",
            Mode::Le => "LE",
            Mode::Est => "EST",
        })
    }
}

#[derive(Clone, Debug)]
pub struct GateTarget {
    pub name: String,
    pub mode: Mode,
    /// `(input, target)` pairs in the code space.
    pub pairs: Vec<(State, State)>,
    /// Pairs in the error space; required for LE and EST.
    pub error_pairs: Option<Vec<(State, State)>>,
    /// Logical matrix, when the target is a logical gate.
    pub logical: Option<Matrix2<C64>>,
    /// Only the transmon is driven.
    pub qubit_only: bool,
}

impl GateTarget {
    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.pairs.iter().chain(self.error_pairs.iter().flatten()) {
            if (i.norm() - 1.0).abs() > 1e-10 || (t.norm() - 1.0).abs() > 1e-10 {
                return Err(EstError::InvalidConfig(format!("target {} has non-normalized states", self.name)));
            }
        }
        if self.mode != Mode::Ord && self.error_pairs.is_none() {
            return Err(EstError::InvalidConfig(format!("{} mode requires an error-space map", self.mode)));
        }
        Ok(())
    }

    pub fn with_mode(mut self, mode: Mode) -> Result<Self> {
        self.mode = mode;
        self.validate()?;
        Ok(self)
    }
}

fn apply_logical(code: &CodeSubspace, u: &Matrix2<C64>, psi: &State) -> State {
    let c = code.coordinates(psi);
    code.embed(u[(0, 0)] * c[0] + u[(0, 1)] * c[1], u[(1, 0)] * c[0] + u[(1, 1)] * c[1])
}

pub fn logical_x() -> Matrix2<C64> {
    Matrix2::new(ZERO, ONE, ONE, ZERO)
}

pub fn logical_h() -> Matrix2<C64> {
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    Matrix2::new(s, s, s, -s)
}

pub fn logical_t() -> Matrix2<C64> {
    Matrix2::new(ONE, ZERO, ZERO, C64::from_polar(1.0, FRAC_PI_4))
}

/// Logical gate `u` on the code, with the same matrix acting on the error words of `a`.
pub fn logical_gate(
    code: &CodeSubspace,
    cfg: &HilbertConfig,
    name: &str,
    u: Matrix2<C64>,
    mode: Mode,
) -> Result<GateTarget> {
    let ops = fock_operators(cfg)?;
    let err = error_subspace(code, &ops.a)?;
    let pairs = |c: &CodeSubspace| -> Vec<(State, State)> {
        CARDINAL_ANGLES
            .iter()
            .map(|&(t, p)| {
                let s = logical_state(c, t, p);
                let out = apply_logical(c, &u, &s);
                (s, out)
            })
            .collect()
    };
    let target = GateTarget {
        name: name.to_string(),
        mode,
        pairs: pairs(code),
        error_pairs: Some(pairs(&err)),
        logical: Some(u),
        qubit_only: false,
    };
    target.validate()?;
    Ok(target)
}

pub fn x_gate(code: &CodeSubspace, cfg: &HilbertConfig, mode: Mode) -> Result<GateTarget> {
    logical_gate(code, cfg, "X", logical_x(), mode)
}

pub fn h_gate(code: &CodeSubspace, cfg: &HilbertConfig, mode: Mode) -> Result<GateTarget> {
    logical_gate(code, cfg, "H", logical_h(), mode)
}

/// T gate, realized with the transmon drive alone.
pub fn t_gate(code: &CodeSubspace, cfg: &HilbertConfig, mode: Mode) -> Result<GateTarget> {
    let mut t = logical_gate(code, cfg, "T", logical_t(), mode)?;
    t.qubit_only = true;
    Ok(t)
}

/// Raises the transmon of every basis component by one level.
fn with_qubit_excited(psi: &State, cfg: &HilbertConfig) -> State {
    let mut out = State::zeros(psi.len());
    for n in 0..cfg.cavity_dim {
        for j in 0..cfg.qubit_dim - 1 {
            out[cfg.index(n, j + 1)] = psi[cfg.index(n, j)];
        }
    }
    out
}

/// Recovery map: code states are left alone, error states return to the code with
/// the transmon excited. `compensate_ns` pre-rotates the targets by `exp(+i H0 τ)`
/// so that an idle of length τ under `h0` lands on the nominal targets.
pub fn aqec_target(
    code: &CodeSubspace,
    cfg: &HilbertConfig,
    h0: &CMat,
    compensate_ns: Option<f64>,
) -> Result<GateTarget> {
    let ops = fock_operators(cfg)?;
    let err = error_subspace(code, &ops.a)?;
    let frame = compensate_ns.map(|tau| HermitianEigen::new(h0).propagator(-tau));
    let rotate = |s: State| match &frame {
        Some(u) => u * s,
        None => s,
    };
    let mut pairs = Vec::with_capacity(12);
    for &(t, p) in CARDINAL_ANGLES.iter() {
        let s = logical_state(code, t, p);
        pairs.push((s.clone(), rotate(s)));
    }
    for &(t, p) in CARDINAL_ANGLES.iter() {
        let e = logical_state(&err, t, p);
        let c = with_qubit_excited(&logical_state(code, t, p), cfg);
        pairs.push((e, rotate(c)));
    }
    let target = GateTarget {
        name: "AQEC".into(),
        mode: Mode::Ord,
        pairs,
        error_pairs: None,
        logical: None,
        qubit_only: false,
    };
    target.validate()?;
    Ok(target)
}

/// Qubit cardinal state `cos(θ/2)|g⟩ + e^{iφ} sin(θ/2)|e⟩` with the cavity in vacuum.
fn qubit_cardinal(cfg: &HilbertConfig, theta: f64, phi: f64) -> State {
    cfg.basis(0, 0) * C64::new((theta / 2.0).cos(), 0.0) + cfg.basis(0, 1) * C64::from_polar((theta / 2.0).sin(), phi)
}

/// Encode `|g⟩ → |0_L⟩`, `|e⟩ → |1_L⟩` (cavity from vacuum, transmon ends in `|g⟩`).
pub fn encode_target(code: &CodeSubspace, cfg: &HilbertConfig) -> Result<GateTarget> {
    let pairs = CARDINAL_ANGLES
        .iter()
        .map(|&(t, p)| (qubit_cardinal(cfg, t, p), logical_state(code, t, p)))
        .collect();
    let target = GateTarget { name: "encode".into(), mode: Mode::Ord, pairs, error_pairs: None, logical: None, qubit_only: false };
    target.validate()?;
    Ok(target)
}

pub fn decode_target(code: &CodeSubspace, cfg: &HilbertConfig) -> Result<GateTarget> {
    let mut t = encode_target(code, cfg)?;
    t.pairs = t.pairs.into_iter().map(|(a, b)| (b, a)).collect();
    t.name = "decode".into();
    Ok(t)
}

/// Maps the error words of `a` back onto the transmon.
pub fn error_decode_target(code: &CodeSubspace, cfg: &HilbertConfig) -> Result<GateTarget> {
    let ops = fock_operators(cfg)?;
    let err = error_subspace(code, &ops.a)?;
    let pairs = CARDINAL_ANGLES
        .iter()
        .map(|&(t, p)| (logical_state(&err, t, p), qubit_cardinal(cfg, t, p)))
        .collect();
    let target = GateTarget { name: "error_decode".into(), mode: Mode::Ord, pairs, error_pairs: None, logical: None, qubit_only: false };
    target.validate()?;
    Ok(target)
}

/// Target by name: `X`, `H`, `T`, `AQEC`, `encode`, `decode`, `error_decode`.
pub fn target_by_name(
    name: &str,
    code: &CodeSubspace,
    cfg: &HilbertConfig,
    h0: &CMat,
    mode: Mode,
) -> Result<GateTarget> {
    let t = match name {
        "X" => x_gate(code, cfg, mode)?,
        "H" => h_gate(code, cfg, mode)?,
        "T" => t_gate(code, cfg, mode)?,
        "AQEC" => aqec_target(code, cfg, h0, None)?.with_mode(mode)?,
        "encode" => encode_target(code, cfg)?.with_mode(mode)?,
        "decode" => decode_target(code, cfg)?.with_mode(mode)?,
        "error_decode" => error_decode_target(code, cfg)?.with_mode(mode)?,
        other => return Err(EstError::InvalidConfig(format!("unknown target {other:?}"))),
    };
    Ok(t)
}
