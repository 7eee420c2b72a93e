//! Lossy gate characterization: fidelity decomposition under the master equation,
//! jump-time sweeps, and repeated-gate sequences with recovery.

use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codespace::{error_subspace, CodeSubspace, State};
use crate::dynamics::PulsePropagator;
use crate::error::{EstError, Result};
use crate::grape::GateTarget;
use crate::hilbert::{fock_operators, CollapseOperator, ControlSystem};
use crate::lindblad::{idle, pure_density, LindbladOptions, LindbladPropagator};
use crate::linalg::{CMat, C64, ONE, ZERO};
use crate::metrics::tomography::{embed_density, logical_density, process_fidelity, process_tomography, unitary_chi};
use crate::pulse::PulseEnvelope;

/// Projector onto cavity levels of the given parity with the transmon in `|g⟩`.
pub fn parity_ground_projector(sys: &ControlSystem, odd: bool) -> CMat {
    let d = sys.dim();
    let mut p = CMat::zeros(d, d);
    for n in (0..sys.cfg.cavity_dim).filter(|n| (n % 2 == 1) == odd) {
        let i = sys.cfg.index(n, 0);
        p[(i, i)] = ONE;
    }
    p
}

/// `Σ_i |w_i⟩⟨e_i|`, returning the error words of `a` to the code words.
pub fn recovery_operator(code: &CodeSubspace, err: &CodeSubspace) -> CMat {
    let [w0, w1] = code.words();
    let [e0, e1] = err.words();
    w0 * e0.adjoint() + w1 * e1.adjoint()
}

/// Instantaneous recovery `ρ → P_C ρ P_C + R ρ R†`.
pub fn ideal_recovery(rho: &CMat, code: &CodeSubspace, r: &CMat) -> CMat {
    let p = &code.projector;
    p * rho * p + r * rho * r.adjoint()
}

fn overlap(rho: &CMat, t: &State) -> f64 {
    t.dotc(&(rho * t)).re
}

fn post_selected(rho: &CMat, p: &CMat, t: &State) -> Result<f64> {
    let w = (p * rho).trace().re;
    if w < 1e-12 {
        return Err(EstError::Undefined(format!("post-selection probability {w:.2e}")));
    }
    Ok(overlap(rho, t) / w)
}

/// Average fidelities of a gate under the master equation, each over the six cardinal starts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossyGateReport {
    /// Code starts against the targets, no post-selection.
    pub net: f64,
    /// Code starts post-selected on even parity with the transmon in `|g⟩`.
    pub code_space: f64,
    /// Error-word starts post-selected on odd parity, against the error targets.
    pub error_space: Option<f64>,
    /// Code starts post-selected on odd parity, against the error targets.
    pub et: Option<f64>,
    /// Code starts after an instantaneous ideal recovery.
    pub ideal_qec: f64,
}

pub fn lossy_gate_report(
    sys: &ControlSystem,
    pulse: &PulseEnvelope,
    target: &GateTarget,
    code: &CodeSubspace,
    collapse: &[CollapseOperator],
) -> Result<LossyGateReport> {
    let lp = LindbladPropagator::new(sys, pulse, collapse, LindbladOptions::default())?;
    let ops = fock_operators(&sys.cfg)?;
    let err = error_subspace(code, &ops.a)?;
    let r = recovery_operator(code, &err);
    let even = parity_ground_projector(sys, false);
    let odd = parity_ground_projector(sys, true);

    let code_out: Vec<CMat> =
        target.pairs.par_iter().map(|(s, _)| lp.evolve(&pure_density(s))).collect::<Result<_>>()?;
    let k = target.pairs.len() as f64;
    let mut net = 0.0;
    let mut code_space = 0.0;
    let mut ideal_qec = 0.0;
    for (rho, (_, t)) in code_out.iter().zip(&target.pairs) {
        net += overlap(rho, t);
        code_space += post_selected(rho, &even, t)?;
        ideal_qec += overlap(&ideal_recovery(rho, code, &r), t);
    }
    let (mut error_space, mut et) = (None, None);
    if let Some(errs) = &target.error_pairs {
        let err_out: Vec<CMat> =
            errs.par_iter().map(|(s, _)| lp.evolve(&pure_density(s))).collect::<Result<_>>()?;
        let mut fe = 0.0;
        let mut fet = 0.0;
        for ((rho_e, (_, te)), rho_c) in err_out.iter().zip(errs).zip(&code_out) {
            fe += post_selected(rho_e, &odd, te)?;
            fet += post_selected(rho_c, &odd, te)?;
        }
        error_space = Some(fe / errs.len() as f64);
        et = Some(fet / errs.len() as f64);
    }
    Ok(LossyGateReport { net: net / k, code_space: code_space / k, error_space, et, ideal_qec: ideal_qec / k })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpSweep {
    pub times: Vec<f64>,
    pub infidelity: Vec<f64>,
    pub mean: f64,
}

impl JumpSweep {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("# t_jump_ns,error_infidelity\n");
        for (t, v) in self.times.iter().zip(&self.infidelity) {
            s.push_str(&format!("{t},{v}\n"));
        }
        s
    }
}

/// Error-space infidelity after a single jump of `e` at each of `n_times` uniform
/// times in `[0, T]`, averaged over the starts. `targets` are the ideal final
/// error states.
pub fn jump_sweep(
    prop: &PulsePropagator,
    starts: &[State],
    targets: &[State],
    e: &CMat,
    n_times: usize,
) -> Result<JumpSweep> {
    if n_times < 2 {
        return Err(EstError::InvalidConfig("n_times must be at least 2".into()));
    }
    if starts.len() != targets.len() || starts.is_empty() {
        return Err(EstError::DimensionMismatch { expected: targets.len(), got: starts.len() });
    }
    let duration = prop.len() as f64 * prop.dt;
    let times: Vec<f64> = (0..n_times).map(|i| duration * i as f64 / (n_times - 1) as f64).collect();
    let infidelity: Vec<f64> = times
        .par_iter()
        .map(|&t| {
            let mut f = 0.0;
            for (s, tg) in starts.iter().zip(targets) {
                let out = prop.jump_conditioned(s, t, e)?;
                f += out.dotc(tg).norm_sqr();
            }
            Ok(1.0 - f / starts.len() as f64)
        })
        .collect::<Result<_>>()?;
    let mean = infidelity.iter().sum::<f64>() / n_times as f64;
    Ok(JumpSweep { times, infidelity, mean })
}

/// Jump sweep of `a` against the error-space image of a gate target.
pub fn gate_jump_sweep(
    sys: &ControlSystem,
    pulse: &PulseEnvelope,
    target: &GateTarget,
    n_times: usize,
) -> Result<JumpSweep> {
    let errs = target
        .error_pairs
        .as_ref()
        .ok_or_else(|| EstError::InvalidConfig(format!("target {} has no error-space map", target.name)))?;
    let prop = PulsePropagator::new(sys, pulse)?;
    let ops = fock_operators(&sys.cfg)?;
    let starts: Vec<State> = target.pairs.iter().map(|(s, _)| s.clone()).collect();
    let targets: Vec<State> = errs.iter().map(|(_, t)| t.clone()).collect();
    jump_sweep(&prop, &starts, &targets, &ops.a, n_times)
}

/// One element of a gate sequence.
pub enum SequenceGate {
    /// Identity with zero duration.
    Identity,
    /// A driven gate and its logical matrix.
    Pulse { pulse: PulseEnvelope, logical: Matrix2<C64> },
}

impl SequenceGate {
    fn logical(&self) -> Matrix2<C64> {
        match self {
            SequenceGate::Identity => Matrix2::identity(),
            SequenceGate::Pulse { logical, .. } => *logical,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryKind {
    None,
    /// Instantaneous `ρ → P_C ρ P_C + R ρ R†`.
    Ideal,
    /// A recovery pulse followed by an idle of the reset duration and a transmon reset.
    Pulse,
}

pub struct SequenceSpec {
    pub gates: Vec<SequenceGate>,
    pub recovery: RecoveryKind,
    pub recovery_pulse: Option<PulseEnvelope>,
    pub reset_ns: f64,
    pub counts: Vec<u32>,
    pub lossy: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequencePoint {
    pub n: u32,
    pub process_fidelity: f64,
    /// Smallest code-space weight among the tomography inputs before decoding.
    pub code_weight: f64,
}

/// Conditional transmon reset `ρ → Σ_j (I ⊗ |g⟩⟨j|) ρ (I ⊗ |j⟩⟨g|)`.
pub fn qubit_reset(sys: &ControlSystem, rho: &CMat) -> CMat {
    let d = sys.dim();
    let mut out = CMat::zeros(d, d);
    let cfg = &sys.cfg;
    for n in 0..cfg.cavity_dim {
        for m in 0..cfg.cavity_dim {
            let mut v = ZERO;
            for j in 0..cfg.qubit_dim {
                v += rho[(cfg.index(n, j), cfg.index(m, j))];
            }
            out[(cfg.index(n, 0), cfg.index(m, 0))] = v;
        }
    }
    out
}

/// Code-space block of `ρ` with the missing weight replaced by the maximally mixed state.
fn decode(rho: &CMat, code: &CodeSubspace) -> (Matrix2<C64>, f64) {
    let [w0, w1] = code.words();
    let block = logical_density(rho, w0, w1);
    let w = block.trace().re;
    let out = block + Matrix2::identity() * C64::new((1.0 - w).max(0.0) * 0.5, 0.0);
    (out, w)
}

/// Process fidelity of `N` repetitions of the gate list followed by one recovery,
/// for every `N` in `spec.counts`.
pub fn run_sequence(
    sys: &ControlSystem,
    code: &CodeSubspace,
    spec: &SequenceSpec,
    collapse: &[CollapseOperator],
) -> Result<Vec<SequencePoint>> {
    if spec.counts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EstError::InvalidConfig("gate counts must be strictly increasing".into()));
    }
    if spec.gates.is_empty() {
        return Err(EstError::InvalidConfig("sequence has no gates".into()));
    }
    let collapse: &[CollapseOperator] = if spec.lossy { collapse } else { &[] };
    let opts = LindbladOptions::default();
    let props: Vec<Option<LindbladPropagator>> = spec
        .gates
        .iter()
        .map(|g| match g {
            SequenceGate::Identity => Ok(None),
            SequenceGate::Pulse { pulse, .. } => LindbladPropagator::new(sys, pulse, collapse, opts).map(Some),
        })
        .collect::<Result<_>>()?;
    let ops = fock_operators(&sys.cfg)?;
    let err = error_subspace(code, &ops.a)?;
    let r = recovery_operator(code, &err);
    let rec_prop = match spec.recovery {
        RecoveryKind::Pulse => {
            let p = spec
                .recovery_pulse
                .as_ref()
                .ok_or_else(|| EstError::InvalidConfig("pulse recovery needs a recovery pulse".into()))?;
            Some(LindbladPropagator::new(sys, p, collapse, opts)?)
        }
        _ => None,
    };
    let recover = |rho: &CMat| -> Result<CMat> {
        match spec.recovery {
            RecoveryKind::None => Ok(rho.clone()),
            RecoveryKind::Ideal => Ok(ideal_recovery(rho, code, &r)),
            RecoveryKind::Pulse => {
                let mut out = rho.clone();
                let lp = rec_prop.as_ref().unwrap();
                for k in 0..lp.len() {
                    lp.step(k, &mut out);
                }
                let out = idle(sys, collapse, spec.reset_ns, &out)?;
                Ok(qubit_reset(sys, &out))
            }
        }
    };

    let [w0, w1] = code.words();
    let inputs = crate::metrics::tomography::input_states();
    let mut states: Vec<CMat> = inputs.iter().map(|r| embed_density(r, w0, w1)).collect();
    let mut logical = Matrix2::identity();
    let mut done = 0u32;
    let mut points = Vec::with_capacity(spec.counts.len());
    for &n in &spec.counts {
        while done < n {
            for (g, p) in spec.gates.iter().zip(&props) {
                if let Some(lp) = p {
                    states.par_iter_mut().for_each(|rho| {
                        for k in 0..lp.len() {
                            lp.step(k, rho);
                        }
                    });
                }
                logical = g.logical() * logical;
            }
            done += 1;
        }
        let recovered: Vec<CMat> = states.par_iter().map(|rho| recover(rho)).collect::<Result<_>>()?;
        let decoded: Vec<(Matrix2<C64>, f64)> = recovered.iter().map(|rho| decode(rho, code)).collect();
        let code_weight = decoded.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
        let mut idx = 0;
        let tomo = process_tomography(|_| {
            let out = decoded[idx].0;
            idx += 1;
            Ok(out)
        })?;
        let f = process_fidelity(&tomo.chi, &unitary_chi(&logical));
        points.push(SequencePoint { n, process_fidelity: f, code_weight });
    }
    Ok(points)
}

pub fn sequence_csv(points: &[SequencePoint]) -> String {
    let mut s = String::from("# n_gates,process_fidelity,code_weight\n");
    for p in points {
        s.push_str(&format!("{},{},{}\n", p.n, p.process_fidelity, p.code_weight));
    }
    s
}
