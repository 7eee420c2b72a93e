//! Parity-selection Bayes model and code/error-space fidelity decay curves versus
//! the number of applied gates.

pub mod fit;

use serde::{Deserialize, Serialize};

use crate::error::{EstError, Result};

pub use fit::{bootstrap_fit, fit_decay_model, read_curve_csv, FitKind, FitOptions, FitResult};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecayModelParams {
    pub eps_parity: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub gamma_c: f64,
    pub gamma_e: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub f_err_jump: f64,
    #[serde(rename = "G")]
    pub g: f64,
    pub f_alias: f64,
}

impl Default for DecayModelParams {
    fn default() -> Self {
        DecayModelParams {
            eps_parity: 0.05,
            a: 0.91 - 0.25,
            b: 0.25,
            gamma_c: 0.01,
            gamma_e: 0.05,
            d: 0.6,
            f_err_jump: 0.85,
            g: 0.25,
            f_alias: 0.25,
        }
    }
}

impl DecayModelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("eps_parity", self.eps_parity),
            ("f_err_jump", self.f_err_jump),
            ("f_alias", self.f_alias),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(EstError::InvalidConfig(format!("{name} = {p} is not a probability")));
            }
        }
        for (name, p) in [("B", self.b), ("G", self.g)] {
            if !(0.25..=1.0).contains(&p) {
                return Err(EstError::InvalidConfig(format!("{name} = {p} outside [0.25, 1]")));
            }
        }
        if self.gamma_c < 0.0 || self.gamma_e < 0.0 {
            return Err(EstError::InvalidConfig("decay rates must be nonnegative".into()));
        }
        Ok(())
    }

    /// Per-gate code-space fidelity `e^{-γ_C}`.
    pub fn f_c(&self) -> f64 {
        (-self.gamma_c).exp()
    }

    /// Per-gate error-space fidelity `e^{-γ_E}`.
    pub fn f_e(&self) -> f64 {
        (-self.gamma_e).exp()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FidelityCurve {
    pub counts: Vec<u32>,
    pub fidelities: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
}

impl FidelityCurve {
    pub fn new(counts: Vec<u32>, fidelities: Vec<f64>) -> Result<Self> {
        let c = FidelityCurve { counts, fidelities, stderr: None };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.len() != self.fidelities.len() {
            return Err(EstError::DimensionMismatch { expected: self.counts.len(), got: self.fidelities.len() });
        }
        if self.counts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(EstError::InvalidConfig("gate counts must be strictly increasing".into()));
        }
        if self.fidelities.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(EstError::InvalidConfig("fidelities must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// `P(odd | measured odd)` and `P(even | measured even)` for a symmetric readout error.
pub fn parity_posterior(p_odd: f64, eps: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&p_odd) || !(0.0..=1.0).contains(&eps) {
        return Err(EstError::InvalidConfig("probabilities must lie in [0, 1]".into()));
    }
    let num_o = (1.0 - eps) * p_odd;
    let den_o = num_o + eps * (1.0 - p_odd);
    let num_e = (1.0 - eps) * (1.0 - p_odd);
    let den_e = num_e + eps * p_odd;
    if den_o == 0.0 || den_e == 0.0 {
        return Err(EstError::Undefined(format!("parity posterior for p = {p_odd}, eps = {eps}")));
    }
    Ok((num_o / den_o, num_e / den_e))
}

/// `P F_true + (1 − P) F_alias`.
pub fn measured_fidelity(posterior: f64, f_true: f64, f_alias: f64) -> f64 {
    posterior * f_true + (1.0 - posterior) * f_alias
}

/// `A e^{-γ_C N} + B`.
pub fn code_fidelity_curve(n: f64, p: &DecayModelParams) -> f64 {
    p.a * (-p.gamma_c * n).exp() + p.b
}

/// `(D F_jump / N) Σ_{k=1}^{N} F_C^{k-1} F_E^{N-k} + G` in closed form.
pub fn error_fidelity_curve(n: u32, p: &DecayModelParams) -> f64 {
    let nf = n as f64;
    let (fc, fe) = (p.f_c(), p.f_e());
    let series = if (fc - fe).abs() < 1e-9 {
        // F_C^{N−1} Σ_j e^{−jδ} to second order in δ; exactly N F_C^{N−1} at δ = 0.
        let delta = p.gamma_e - p.gamma_c;
        let s = nf - delta * nf * (nf - 1.0) / 2.0 + delta * delta * nf * (nf - 1.0) * (2.0 * nf - 1.0) / 12.0;
        fc.powf(nf - 1.0) * s
    } else {
        // (F_C^N − F_E^N)/(F_C − F_E) written in the rates to avoid cancellation.
        let delta = p.gamma_e - p.gamma_c;
        (-(nf - 1.0) * p.gamma_c).exp() * (-nf * delta).exp_m1() / (-delta).exp_m1()
    };
    p.d * p.f_err_jump * series / nf + p.g
}

/// Explicit sum over the jump position, for cross-checking.
pub fn error_fidelity_sum(n: u32, p: &DecayModelParams) -> f64 {
    let (fc, fe) = (p.f_c(), p.f_e());
    let s: f64 = (1..=n).map(|k| fc.powi(k as i32 - 1) * fe.powi((n - k) as i32)).sum();
    p.d * p.f_err_jump * s / n as f64 + p.g
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OddProbability {
    pub p_odd: f64,
    /// Share of the odd weight from gate jumps.
    pub w_gate: f64,
    /// Share of the odd weight from state preparation.
    pub w_prep: f64,
}

/// `1 − (1 − p_prep)(1 − p_jump)^N` with the branch weights normalized to one.
pub fn p_odd_vs_gates(n: u32, p_jump: f64, p_prep: f64) -> Result<OddProbability> {
    if !(0.0..=1.0).contains(&p_jump) || !(0.0..=1.0).contains(&p_prep) {
        return Err(EstError::InvalidConfig("probabilities must lie in [0, 1]".into()));
    }
    let gate = 1.0 - (1.0 - p_jump).powi(n as i32);
    let p_odd = 1.0 - (1.0 - p_prep) * (1.0 - gate);
    let (w_gate, w_prep) = if p_odd > 0.0 {
        let raw_gate = (1.0 - p_prep) * gate;
        (raw_gate / p_odd, 1.0 - raw_gate / p_odd)
    } else {
        (0.0, 0.0)
    };
    Ok(OddProbability { p_odd, w_gate, w_prep })
}
