//! Gradient pulse engineering: gate targets, cost functions with exact
//! gradients, and the two-stage optimizer.

pub mod cost;
pub mod optimizer;
pub mod targets;

use serde::{Deserialize, Serialize};

use crate::dynamics::{fock_occupation, max_active_level, PulsePropagator};
use crate::error::Result;
use crate::hilbert::{fock_operators, ControlSystem};
use crate::metrics::et_fidelity;
use crate::pulse::PulseEnvelope;

pub use cost::{
    cost_et, cost_fidelity, cost_velocity_variance, gradient, total_cost, CostBreakdown, CostModel, CostWeights,
    ExtraWeights, PulseGradient,
};
pub use optimizer::{optimize, OptimizationReport, PulseShape, RunStatus, Schedule, StageSchedule, TraceEntry};
pub use targets::{
    aqec_target, decode_target, encode_target, error_decode_target, h_gate, logical_gate, logical_h, logical_t,
    logical_x, t_gate, target_by_name,
    x_gate, GateTarget, Mode,
};

/// Lossless figures of merit of a pulse against a target, independent of the cost mode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GateSummary {
    pub code_fidelity: f64,
    pub error_fidelity: Option<f64>,
    /// Averaged over the paired cardinal starts, every step.
    pub et_fidelity_avg: Option<f64>,
    pub max_active_level: Option<usize>,
}

pub fn gate_summary(sys: &ControlSystem, pulse: &PulseEnvelope, target: &GateTarget) -> Result<GateSummary> {
    let prop = PulsePropagator::new(sys, pulse)?;
    let ops = fock_operators(&sys.cfg)?;
    let mut out = GateSummary::default();
    let mut code_trajs = Vec::new();
    let mut f = 0.0;
    for (input, t) in &target.pairs {
        let traj = prop.propagate(input);
        f += traj.last().dotc(t).norm_sqr();
        code_trajs.push(traj);
    }
    out.code_fidelity = f / target.pairs.len() as f64;
    let occ: Vec<Vec<f64>> = code_trajs.iter().flat_map(|t| fock_occupation(t, &sys.cfg)).collect();
    out.max_active_level = max_active_level(&occ, 0.01);
    if let Some(errs) = &target.error_pairs {
        let mut fe = 0.0;
        let mut et = 0.0;
        for ((input, t), ct) in errs.iter().zip(&code_trajs) {
            let traj = prop.propagate(input);
            fe += traj.last().dotc(t).norm_sqr();
            et += et_fidelity(&ct.states, &traj.states, &ops.a, 1)?.value;
        }
        out.error_fidelity = Some(fe / errs.len() as f64);
        out.et_fidelity_avg = Some(et / errs.len() as f64);
    }
    Ok(out)
}
