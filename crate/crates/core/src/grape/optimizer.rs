//! Two-stage Adam optimization of a constrained pulse.
//!
//! The optimizer works on raw samples `x`; the evaluated pulse is always the
//! constrained image `C(x)` and gradients are pulled back through `C`.

use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EstError, Result};
use crate::grape::cost::{CostBreakdown, CostModel, CostWeights, ExtraWeights};
use crate::grape::targets::{GateTarget, Mode};
use crate::grape::{gate_summary, GateSummary};
use crate::hilbert::ControlSystem;
use crate::linalg::{C64, ZERO};
use crate::pulse::{ConstraintMap, PulseConstraints, PulseEnvelope};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub weights: CostWeights,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    pub stage1: StageSchedule,
    pub stage2: StageSchedule,
    /// Adam step size in MHz.
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    /// Upper bound of the uniform initial sample magnitude, MHz.
    pub init_amp_mhz: f64,
    /// The ET cost is evaluated every `et_stride` steps.
    pub et_stride: usize,
    pub extra: ExtraWeights,
    /// A stage ends early when its best cost has not improved by a relative
    /// `stall_tol` for `stall_window` iterations.
    pub stall_window: usize,
    pub stall_tol: f64,
    /// Stage-1 ET weight rises linearly over this many iterations.
    pub et_ramp: usize,
    /// Final code-space infidelity counted as converged.
    pub goal_c1: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            stage1: StageSchedule { weights: CostWeights::new(1.0, 0.7, 7.0), iterations: 2000 },
            stage2: StageSchedule { weights: CostWeights::new(1.0, 0.1, 0.0), iterations: 1000 },
            learning_rate: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
            init_amp_mhz: 0.2,
            et_stride: 1,
            extra: ExtraWeights::default(),
            stall_window: 100000,
            stall_tol: 1e-6,
            et_ramp: 0,
            goal_c1: 1e-2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    BudgetExhausted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stage: u8,
    pub iteration: usize,
    pub c1: f64,
    pub c2: Option<f64>,
    pub c3: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub target: String,
    pub mode: Mode,
    pub duration_ns: f64,
    pub dt_ns: f64,
    pub seed: u64,
    pub et_stride: usize,
    pub stage1_weights: CostWeights,
    pub stage2_weights: CostWeights,
    pub final_costs: CostBreakdown,
    pub summary: GateSummary,
    /// Change of C2 across stage 2, when the ET cost is active.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage2_c2_change: Option<f64>,
    pub status: RunStatus,
    /// Written separately by [`OptimizationReport::trace_csv`].
    #[serde(skip)]
    pub trace: Vec<TraceEntry>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl OptimizationReport {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("# stage,iteration,c1,c2,c3,c_tot (dimensionless)\n");
        for t in &self.trace {
            let c2 = t.c2.map(|v| v.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{},{},{},{}\n", t.stage, t.iteration, t.c1, c2, t.c3, t.total));
        }
        s
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, x: &mut [f64], g: &[f64], lr: f64, b1: f64, b2: f64) {
        self.t += 1;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for i in 0..x.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g[i] * g[i];
            x[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-12);
        }
    }
}

fn pack(eps: &[C64], omega: &[C64]) -> Vec<f64> {
    eps.iter().chain(omega).flat_map(|z| [z.re, z.im]).collect()
}

fn unpack(x: &[f64], n: usize) -> (Vec<C64>, Vec<C64>) {
    let z: Vec<C64> = x.chunks(2).map(|c| C64::new(c[0], c[1])).collect();
    (z[..n].to_vec(), z[n..].to_vec())
}

/// Pulse shape shared by all stages.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseShape {
    pub duration_ns: f64,
    pub dt_ns: f64,
    pub constraints: PulseConstraints,
}

impl PulseShape {
    pub fn samples(&self) -> usize {
        (self.duration_ns / self.dt_ns).round() as usize
    }
}

pub fn random_initial(n: usize, amp: f64, qubit_only: bool, seed: u64) -> (Vec<C64>, Vec<C64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let r: f64 = rng.gen_range(0.0..=amp);
        let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        C64::from_polar(r, phi)
    };
    let eps: Vec<C64> = (0..n).map(|_| draw(&mut rng)).collect();
    let omega: Vec<C64> = (0..n).map(|_| draw(&mut rng)).collect();
    if qubit_only {
        (vec![ZERO; n], omega)
    } else {
        (eps, omega)
    }
}

fn stage_weights(w: CostWeights, mode: Mode) -> CostWeights {
    if mode == Mode::Est {
        w
    } else {
        CostWeights { w_et: 0.0, ..w }
    }
}

pub fn optimize(
    sys: &ControlSystem,
    target: &GateTarget,
    shape: &PulseShape,
    schedule: &Schedule,
    mut progress: impl FnMut(&TraceEntry),
) -> Result<(PulseEnvelope, OptimizationReport)> {
    let start = Instant::now();
    let n = shape.samples();
    let map = ConstraintMap::new(n, shape.dt_ns, &shape.constraints)?;
    let (e0, o0) = random_initial(n, schedule.init_amp_mhz, target.qubit_only, schedule.seed);
    let mut x = pack(&e0, &o0);
    let mut trace = Vec::new();
    let mut stopped_early = false;
    let mut c2_stage2_start = None;
    let mut last = None;

    let build = |x: &[f64]| -> PulseEnvelope {
        let (e, o) = unpack(x, n);
        let eps = if target.qubit_only { vec![ZERO; n] } else { map.apply(&e) };
        PulseEnvelope { dt: shape.dt_ns, eps, omega: map.apply(&o), constraints: shape.constraints }
    };

    for (si, stage) in [schedule.stage1, schedule.stage2].iter().enumerate() {
        let w = stage.weights;
        if w.w_fid + w.w_et + w.w_vel <= 0.0 {
            return Err(EstError::InvalidConfig(format!("stage {} has no positive cost weight", si + 1)));
        }
        let mut model = CostModel::new(sys, target, stage_weights(stage.weights, target.mode))?
            .with_extra(schedule.extra)?;
        model.et_stride = schedule.et_stride;
        let mut adam = Adam::new(x.len());
        let mut best: Option<(f64, Vec<f64>, CostBreakdown)> = None;
        let mut last_improve = 0;
        let w_et = model.weights.w_et;
        for it in 0..stage.iterations {
            let ramp = if si == 0 && it < schedule.et_ramp { (it + 1) as f64 / schedule.et_ramp as f64 } else { 1.0 };
            model.weights.w_et = w_et * ramp;
            let pulse = build(&x);
            let (mut cost, grad) = model.evaluate_with_gradient(&pulse)?;
            cost.total += (w_et - model.weights.w_et) * cost.c2.unwrap_or(0.0);
            if !cost.total.is_finite() {
                return Err(EstError::NonFinite(trace.len()));
            }
            let entry = TraceEntry { stage: si as u8 + 1, iteration: it, c1: cost.c1, c2: cost.c2, c3: cost.c3, total: cost.total };
            progress(&entry);
            trace.push(entry);
            if si == 1 && it == 0 {
                c2_stage2_start = cost.c2;
            }
            let improved = match &best {
                None => true,
                Some((b, _, _)) => cost.total < *b - schedule.stall_tol * b.abs(),
            };
            if improved {
                last_improve = it;
            }
            if best.as_ref().map_or(true, |(b, _, _)| cost.total < *b) {
                best = Some((cost.total, x.clone(), cost));
            }
            if it - last_improve > schedule.stall_window {
                if si == 1 {
                    stopped_early = true;
                }
                break;
            }
            let (ge, go) = (&grad.eps, &grad.omega);
            let (xe, xo) = unpack(&x, n);
            let gxe = if target.qubit_only { vec![ZERO; n] } else { map.pullback(&xe, ge) };
            let gxo = map.pullback(&xo, go);
            let g = pack(&gxe, &gxo);
            adam.step(&mut x, &g, schedule.learning_rate, schedule.beta1, schedule.beta2);
        }
        if let Some((_, bx, bc)) = best {
            x = bx;
            last = Some(bc);
        }
    }

    let pulse = build(&x);
    let final_model = {
        let mut m = CostModel::new(sys, target, stage_weights(schedule.stage2.weights, target.mode))?
            .with_extra(schedule.extra)?;
        m.et_stride = schedule.et_stride;
        m
    };
    let final_costs = match last {
        Some(c) => c,
        None => final_model.evaluate(&pulse)?,
    };
    let summary = gate_summary(sys, &pulse, target)?;
    let converged = stopped_early || final_costs.c1 <= schedule.goal_c1;
    let report = OptimizationReport {
        target: target.name.clone(),
        mode: target.mode,
        duration_ns: shape.duration_ns,
        dt_ns: shape.dt_ns,
        seed: schedule.seed,
        et_stride: schedule.et_stride,
        stage1_weights: stage_weights(schedule.stage1.weights, target.mode),
        stage2_weights: stage_weights(schedule.stage2.weights, target.mode),
        final_costs,
        summary,
        stage2_c2_change: match (c2_stage2_start, final_costs.c2) {
            (Some(a), Some(b)) if target.mode == Mode::Est => Some(b - a),
            _ => None,
        },
        status: if converged { RunStatus::Converged } else { RunStatus::BudgetExhausted },
        trace,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((pulse, report))
}
