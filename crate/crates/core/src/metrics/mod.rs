//! Error-transparency diagnostics along a pulse: Knill–Laflamme violation of the
//! instantaneous code, leakage out of the instantaneous error space, Bloch-vector
//! mismatch between code and error trajectories, and the per-step ET fidelity.

pub mod tomography;
pub mod wigner;

use nalgebra::Matrix2;

use crate::codespace::{error_words, CodeSubspace, State};
use crate::dynamics::{PulsePropagator, Trajectory};
use crate::error::{EstError, Result};
use crate::linalg::{CMat, C64};

pub use tomography::{process_fidelity, process_tomography, unitary_chi, ChiMatrix, TomographyResult};
pub use wigner::{reduced_cavity, wigner};

/// Matrix norm applied to the traceless part of each logical error block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum QecNorm {
    #[default]
    Frobenius,
    /// `Tr(A†A)`, i.e. `2(|x|²+|y|²+|z|²)` for `A = xX + yY + zZ`.
    FrobeniusSquared,
}

/// `⟨w_μ|O|w_ν⟩`.
pub fn logical_block(w0: &State, w1: &State, op: &CMat) -> Matrix2<C64> {
    let o0 = op * w0;
    let o1 = op * w1;
    Matrix2::new(w0.dotc(&o0), w0.dotc(&o1), w1.dotc(&o0), w1.dotc(&o1))
}

fn traceless_norm(m: &Matrix2<C64>, norm: QecNorm) -> f64 {
    let half = (m[(0, 0)] + m[(1, 1)]) * 0.5;
    let t = m - Matrix2::identity() * half;
    let sq = t.iter().map(|z| z.norm_sqr()).sum::<f64>();
    match norm {
        QecNorm::Frobenius => sq.sqrt(),
        QecNorm::FrobeniusSquared => sq,
    }
}

/// `Σ_O ‖M_O − ½Tr(M_O) P‖` over single error operators (default set `{a, n}`).
pub fn qec_violation(code: &CodeSubspace, error_ops: &[CMat]) -> f64 {
    qec_violation_with(code, error_ops, QecNorm::Frobenius)
}

pub fn qec_violation_with(code: &CodeSubspace, error_ops: &[CMat], norm: QecNorm) -> f64 {
    qec_words(&code.word0, &code.word1, error_ops, norm)
}

fn qec_words(w0: &State, w1: &State, error_ops: &[CMat], norm: QecNorm) -> f64 {
    error_ops.iter().map(|o| traceless_norm(&logical_block(w0, w1, o), norm)).sum()
}

/// Multi-error form: sum over all ordered pairs `E_i† E_k`.
pub fn qec_violation_pairs(code: &CodeSubspace, error_ops: &[CMat], norm: QecNorm) -> f64 {
    let mut total = 0.0;
    for ei in error_ops {
        for ek in error_ops {
            let m = ei.adjoint() * ek;
            total += traceless_norm(&logical_block(&code.word0, &code.word1, &m), norm);
        }
    }
    total
}

#[derive(Clone, Debug)]
pub struct MetricSeries {
    pub times: Vec<f64>,
    pub delta_qec: Vec<f64>,
    pub leakage: Vec<f64>,
    /// `None` where the evolved error state has left the instantaneous error space.
    pub traj_mismatch: Vec<Option<f64>>,
}

impl MetricSeries {
    pub fn mean_delta_qec(&self) -> f64 {
        mean(&self.delta_qec)
    }

    pub fn mean_leakage(&self) -> f64 {
        mean(&self.leakage)
    }

    pub fn mean_mismatch(&self) -> f64 {
        let v: Vec<f64> = self.traj_mismatch.iter().flatten().copied().collect();
        mean(&v)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("# t_ns,delta_qec,leakage,mismatch\n");
        for i in 0..self.times.len() {
            let m = match self.traj_mismatch[i] {
                Some(v) => v.to_string(),
                None => "nan".into(),
            };
            s.push_str(&format!("{},{},{},{}\n", self.times[i], self.delta_qec[i], self.leakage[i], m));
        }
        s
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Evolved code words at every step boundary.
fn evolved_words(prop: &PulsePropagator, code0: &CodeSubspace) -> (Trajectory<State>, Trajectory<State>) {
    (prop.propagate(&code0.word0), prop.propagate(&code0.word1))
}

/// Instantaneous error words at every step boundary.
fn instantaneous_error_words(
    words0: &[State],
    words1: &[State],
    e: &CMat,
) -> Result<Vec<(State, State)>> {
    words0.iter().zip(words1).map(|(w0, w1)| error_words(w0, w1, e)).collect()
}

/// `1 − Tr[P_E(t) ρ(t)]` with `ρ(0)` the maximally mixed state on the initial error space.
pub fn instantaneous_leakage(code0: &CodeSubspace, e: &CMat, prop: &PulsePropagator) -> Result<Vec<f64>> {
    let (c0, c1) = evolved_words(prop, code0);
    let err_t = instantaneous_error_words(&c0.states, &c1.states, e)?;
    let (e0, e1) = error_words(&code0.word0, &code0.word1, e)?;
    let t0 = prop.propagate(&e0);
    let t1 = prop.propagate(&e1);
    Ok(leakage_from(&err_t, &t0.states, &t1.states))
}

fn leakage_from(err_t: &[(State, State)], t0: &[State], t1: &[State]) -> Vec<f64> {
    err_t
        .iter()
        .enumerate()
        .map(|(k, (f0, f1))| {
            let w: f64 = [&t0[k], &t1[k]]
                .iter()
                .map(|psi| f0.dotc(psi).norm_sqr() + f1.dotc(psi).norm_sqr())
                .sum();
            (1.0 - 0.5 * w).clamp(0.0, 1.0)
        })
        .collect()
}

fn bloch(w0: &State, w1: &State, psi: &State) -> Option<([f64; 3], f64)> {
    let c0 = w0.dotc(psi);
    let c1 = w1.dotc(psi);
    let w = c0.norm_sqr() + c1.norm_sqr();
    if w.sqrt() < 1e-6 {
        return None;
    }
    let x = 2.0 * (c0.conj() * c1).re / w;
    let y = 2.0 * (c0.conj() * c1).im / w;
    let z = (c0.norm_sqr() - c1.norm_sqr()) / w;
    Some(([x, y, z], w))
}

/// Distance between the Bloch vectors of the code trajectory (in the instantaneous
/// code space) and the error trajectory (projected onto the instantaneous error space).
pub fn trajectory_mismatch(
    code0: &CodeSubspace,
    e: &CMat,
    psi0: &State,
    prop: &PulsePropagator,
) -> Result<Vec<Option<f64>>> {
    let (c0, c1) = evolved_words(prop, code0);
    let err_t = instantaneous_error_words(&c0.states, &c1.states, e)?;
    mismatch_from(&c0.states, &c1.states, &err_t, e, psi0, prop)
}

fn mismatch_from(
    c0: &[State],
    c1: &[State],
    err_t: &[(State, State)],
    e: &CMat,
    psi0: &State,
    prop: &PulsePropagator,
) -> Result<Vec<Option<f64>>> {
    let phi0 = e * psi0;
    let n = phi0.norm();
    if n < 1e-12 {
        return Err(EstError::Annihilated(n));
    }
    let code_traj = prop.propagate(psi0);
    let err_traj = prop.propagate(&(phi0 / C64::new(n, 0.0)));
    Ok((0..code_traj.states.len())
        .map(|k| {
            let (rc, _) = bloch(&c0[k], &c1[k], &code_traj.states[k])?;
            let (re, _) = bloch(&err_t[k].0, &err_t[k].1, &err_traj.states[k])?;
            Some(((rc[0] - re[0]).powi(2) + (rc[1] - re[1]).powi(2) + (rc[2] - re[2]).powi(2)).sqrt())
        })
        .collect())
}

/// Δ_QEC, leakage and mismatch for `E = a` and error set `{a, n}`.
pub fn metric_series(
    prop: &PulsePropagator,
    code0: &CodeSubspace,
    a: &CMat,
    n: &CMat,
    psi0: &State,
) -> Result<MetricSeries> {
    let (c0, c1) = evolved_words(prop, code0);
    let errs = [a.clone(), n.clone()];
    let delta_qec = c0
        .states
        .iter()
        .zip(&c1.states)
        .map(|(w0, w1)| qec_words(w0, w1, &errs, QecNorm::Frobenius))
        .collect();
    let err_t = instantaneous_error_words(&c0.states, &c1.states, a)?;
    let (e0, e1) = error_words(&code0.word0, &code0.word1, a)?;
    let leakage = leakage_from(&err_t, &prop.propagate(&e0).states, &prop.propagate(&e1).states);
    let traj_mismatch = mismatch_from(&c0.states, &c1.states, &err_t, a, psi0, prop)?;
    Ok(MetricSeries { times: c0.times, delta_qec, leakage, traj_mismatch })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EtFidelity {
    pub value: f64,
    /// Steps skipped because `⟨n⟩` of the code state was below 1e-6.
    pub singular_steps: usize,
    pub evaluated_steps: usize,
}

/// `(1/N) Σ_i |⟨ψ_E(t_i)|a|ψ_C(t_i)⟩|² / ⟨ψ_C(t_i)|a†a|ψ_C(t_i)⟩` over
/// `t_i = 0, k dt, 2k dt, ...` strictly before the end of the pulse.
pub fn et_fidelity(traj_c: &[State], traj_e: &[State], a: &CMat, stride: usize) -> Result<EtFidelity> {
    if traj_c.len() != traj_e.len() {
        return Err(EstError::DimensionMismatch { expected: traj_c.len(), got: traj_e.len() });
    }
    let stride = stride.max(1);
    let steps = traj_c.len().saturating_sub(1).max(1);
    let mut total = 0.0;
    let mut count = 0;
    let mut singular = 0;
    for i in (0..steps).step_by(stride) {
        let apsi = a * &traj_c[i];
        let nbar = apsi.norm_squared();
        count += 1;
        if nbar < 1e-6 {
            singular += 1;
            continue;
        }
        total += traj_e[i].dotc(&apsi).norm_sqr() / nbar;
    }
    Ok(EtFidelity { value: total / count as f64, singular_steps: singular, evaluated_steps: count })
}

/// `⟨n⟩_0(t) − ⟨n⟩_1(t)`.
pub fn mean_photon_imbalance(traj0: &[State], traj1: &[State], n: &CMat) -> Vec<f64> {
    traj0
        .iter()
        .zip(traj1)
        .map(|(p0, p1)| p0.dotc(&(n * p0)).re - p1.dotc(&(n * p1)).re)
        .collect()
}

/// `(1/K) Σ |⟨ψ_i|t_i⟩|²`.
pub fn average_gate_fidelity(outputs: &[State], targets: &[State]) -> Result<f64> {
    if outputs.len() != targets.len() || outputs.is_empty() {
        return Err(EstError::DimensionMismatch { expected: targets.len(), got: outputs.len() });
    }
    Ok(outputs.iter().zip(targets).map(|(o, t)| o.dotc(t).norm_sqr()).sum::<f64>() / outputs.len() as f64)
}
