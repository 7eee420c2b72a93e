//! Closed-system and jump-conditioned propagation under piecewise-constant drives.

use crate::codespace::State;
use crate::error::{EstError, Result};
use crate::hilbert::{ControlSystem, HilbertConfig};
use crate::linalg::{CMat, CVec, HermitianEigen, C64};
use crate::pulse::PulseEnvelope;

#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub times: Vec<f64>,
    pub states: Vec<T>,
}

impl<T> Trajectory<T> {
    pub fn last(&self) -> &T {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Eigendecomposed step Hamiltonians of one pulse. Building it is the expensive
/// part; every propagation of the same pulse reuses it.
#[derive(Clone, Debug)]
pub struct PulsePropagator {
    pub dt: f64,
    pub steps: Vec<HermitianEigen>,
    phases: Vec<Vec<C64>>,
}

impl PulsePropagator {
    pub fn new(sys: &ControlSystem, pulse: &PulseEnvelope) -> Result<Self> {
        pulse.validate()?;
        let mut steps = Vec::with_capacity(pulse.len());
        let mut h0_eig: Option<HermitianEigen> = None;
        for k in 0..pulse.len() {
            let (e, o) = (pulse.eps[k], pulse.omega[k]);
            let eig = if e == C64::new(0.0, 0.0) && o == C64::new(0.0, 0.0) {
                h0_eig.get_or_insert_with(|| HermitianEigen::new(&sys.h0)).clone()
            } else {
                HermitianEigen::new(&sys.hamiltonian(e, o))
            };
            steps.push(eig);
        }
        let phases = steps
            .iter()
            .map(|s| s.values.iter().map(|&l| C64::from_polar(1.0, -l * pulse.dt)).collect())
            .collect();
        Ok(PulsePropagator { dt: pulse.dt, steps, phases })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn step_unitary(&self, k: usize) -> CMat {
        self.steps[k].propagator(self.dt)
    }

    /// `exp(-i H_k dt) ψ`.
    pub fn apply(&self, k: usize, psi: &CVec) -> CVec {
        let s = &self.steps[k];
        let mut c = s.vectors.ad_mul(psi);
        for (z, p) in c.iter_mut().zip(&self.phases[k]) {
            *z *= p;
        }
        &s.vectors * c
    }

    /// `exp(+i H_k dt) ψ`.
    pub fn apply_adjoint(&self, k: usize, psi: &CVec) -> CVec {
        let s = &self.steps[k];
        let mut c = s.vectors.ad_mul(psi);
        for (z, p) in c.iter_mut().zip(&self.phases[k]) {
            *z *= p.conj();
        }
        &s.vectors * c
    }

    /// `exp(-i H_k τ) ψ` for a partial step.
    pub fn apply_partial(&self, k: usize, tau: f64, psi: &CVec) -> CVec {
        let s = &self.steps[k];
        let mut c = s.vectors.ad_mul(psi);
        for (z, &l) in c.iter_mut().zip(&s.values) {
            *z *= C64::from_polar(1.0, -l * tau);
        }
        &s.vectors * c
    }

    pub fn propagate(&self, psi0: &State) -> Trajectory<State> {
        let mut states = Vec::with_capacity(self.len() + 1);
        states.push(psi0.clone());
        for k in 0..self.len() {
            let next = self.apply(k, states.last().unwrap());
            states.push(next);
        }
        let times = (0..=self.len()).map(|k| k as f64 * self.dt).collect();
        Trajectory { times, states }
    }

    /// Accumulated propagators `U(t_k)` for `k = 0..=N`.
    pub fn partial_unitaries(&self) -> Vec<CMat> {
        let d = self.steps.first().map(|s| s.vectors.nrows()).unwrap_or(0);
        let mut out = Vec::with_capacity(self.len() + 1);
        out.push(CMat::identity(d, d));
        for k in 0..self.len() {
            let u = self.step_unitary(k) * out.last().unwrap();
            out.push(u);
        }
        out
    }

    pub fn total_unitary(&self, dim: usize) -> CMat {
        let mut u = CMat::identity(dim, dim);
        for k in 0..self.len() {
            u = self.step_unitary(k) * u;
        }
        u
    }

    /// Final state when `e` acts once at `t_jump`.
    pub fn jump_conditioned(&self, psi0: &State, t_jump: f64, e: &CMat) -> Result<State> {
        let total = self.len() as f64 * self.dt;
        if !(0.0..=total + 1e-12).contains(&t_jump) {
            return Err(EstError::InvalidConfig(format!("jump time {t_jump} outside [0, {total}]")));
        }
        let mut k_jump = ((t_jump / self.dt).floor() as usize).min(self.len());
        let mut tau = t_jump - k_jump as f64 * self.dt;
        if k_jump == self.len() {
            tau = 0.0;
        } else if tau > self.dt {
            tau = self.dt;
        }
        if tau.abs() < 1e-12 * self.dt {
            tau = 0.0;
        }
        let mut psi = psi0.clone();
        for k in 0..k_jump {
            psi = self.apply(k, &psi);
        }
        if tau > 0.0 {
            psi = self.apply_partial(k_jump, tau, &psi);
        }
        let mut phi = e * &psi;
        let norm = phi.norm();
        if norm < 1e-12 {
            return Err(EstError::Annihilated(norm));
        }
        phi /= C64::new(norm, 0.0);
        if tau > 0.0 {
            phi = self.apply_partial(k_jump, self.dt - tau, &phi);
            k_jump += 1;
        }
        for k in k_jump..self.len() {
            phi = self.apply(k, &phi);
        }
        Ok(phi)
    }
}

pub fn step_unitaries(sys: &ControlSystem, pulse: &PulseEnvelope) -> Result<Vec<CMat>> {
    let p = PulsePropagator::new(sys, pulse)?;
    Ok((0..p.len()).map(|k| p.step_unitary(k)).collect())
}

pub fn propagate(sys: &ControlSystem, pulse: &PulseEnvelope, psi0: &State) -> Result<Trajectory<State>> {
    if psi0.len() != sys.dim() {
        return Err(EstError::DimensionMismatch { expected: sys.dim(), got: psi0.len() });
    }
    Ok(PulsePropagator::new(sys, pulse)?.propagate(psi0))
}

pub fn jump_conditioned_propagate(
    sys: &ControlSystem,
    pulse: &PulseEnvelope,
    psi0: &State,
    t_jump: f64,
    e: &CMat,
) -> Result<State> {
    if psi0.len() != sys.dim() {
        return Err(EstError::DimensionMismatch { expected: sys.dim(), got: psi0.len() });
    }
    PulsePropagator::new(sys, pulse)?.jump_conditioned(psi0, t_jump, e)
}

/// Population of each cavity Fock level (summed over the transmon) at every step.
pub fn fock_occupation(traj: &Trajectory<State>, cfg: &HilbertConfig) -> Vec<Vec<f64>> {
    traj.states.iter().map(|psi| fock_populations(psi, cfg)).collect()
}

pub fn fock_populations(psi: &State, cfg: &HilbertConfig) -> Vec<f64> {
    let mut pops = vec![0.0; cfg.cavity_dim];
    for n in 0..cfg.cavity_dim {
        for j in 0..cfg.qubit_dim {
            pops[n] += psi[cfg.index(n, j)].norm_sqr();
        }
    }
    pops
}

/// Largest Fock level whose population exceeds `threshold` at any step.
pub fn max_active_level(occupation: &[Vec<f64>], threshold: f64) -> Option<usize> {
    occupation
        .iter()
        .filter_map(|pops| pops.iter().rposition(|&p| p > threshold))
        .max()
}

/// Long-format occupation table, one `t_ns,fock_index,population` line per level and time.
pub fn occupation_csv(times: &[f64], occupation: &[Vec<f64>]) -> String {
    let rows = times.iter().zip(occupation).flat_map(|(t, pops)| {
        pops.iter().enumerate().map(move |(n, p)| vec![format!("{t}"), n.to_string(), format!("{p:.12e}")])
    });
    crate::io::csv_table("t_ns,fock_index,population", rows)
}
