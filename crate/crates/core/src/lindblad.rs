//! Open-system propagation by a truncated Taylor series of the Lindblad generator.
//!
//! The generator is applied in sparse form,
//! `L(ρ) = -i(H_eff ρ - ρ H_eff†) + Σ C ρ C†` with `H_eff = H - (i/2) Σ C†C`.

use crate::dynamics::Trajectory;
use crate::error::{EstError, Result};
use crate::hilbert::{CollapseOperator, ControlSystem};
use crate::linalg::{hermiticity_residual, CMat, HermitianEigen, Sparse, C64, I, ZERO};
use crate::pulse::PulseEnvelope;

#[derive(Clone, Copy, Debug)]
pub struct LindbladOptions {
    /// Substeps per pulse sample; `None` picks enough to keep `h‖L‖ ≤ 1/2`.
    pub substeps: Option<usize>,
    /// Taylor terms are added until the largest entry drops below this.
    pub tol: f64,
}

impl Default for LindbladOptions {
    fn default() -> Self {
        LindbladOptions { substeps: None, tol: 1e-16 }
    }
}

pub fn validate_density(rho: &CMat) -> Result<()> {
    if rho.nrows() != rho.ncols() {
        return Err(EstError::NonPhysical("not square".into()));
    }
    let h = hermiticity_residual(rho);
    if h > 1e-9 {
        return Err(EstError::NonPhysical(format!("not Hermitian (residual {h:.2e})")));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
        return Err(EstError::NonPhysical(format!("trace {tr} differs from 1")));
    }
    let min = HermitianEigen::new(rho).values.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-9 {
        return Err(EstError::NonPhysical(format!("negative eigenvalue {min:.2e}")));
    }
    Ok(())
}

/// Sparse Lindblad generator for a fixed Hamiltonian.
struct Generator {
    n: usize,
    h_eff: Sparse,
    jumps: Vec<Sparse>,
    norm_bound: f64,
}

impl Generator {
    fn new(h: &CMat, jump_sum: &CMat, jumps: &[Sparse]) -> Self {
        let h_eff = h - jump_sum * (I * 0.5);
        let h_sp = Sparse::from_dense(&h_eff);
        let col_norm = |m: &Sparse| {
            let mut c = vec![0.0; m.dim];
            for &(_, j, v) in &m.entries {
                c[j] += v.norm();
            }
            c.into_iter().fold(0.0, f64::max)
        };
        let norm_bound = 2.0 * col_norm(&h_sp) + jumps.iter().map(|c| col_norm(c).powi(2)).sum::<f64>();
        Generator { n: h.nrows(), h_eff: h_sp, jumps: jumps.to_vec(), norm_bound }
    }

    /// `out = L(rho)`; column-major storage.
    fn apply(&self, rho: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        let n = self.n;
        scratch.iter_mut().for_each(|z| *z = ZERO);
        for &(i, k, v) in &self.h_eff.entries {
            for j in 0..n {
                scratch[i + j * n] += v * rho[k + j * n];
            }
        }
        // -i A + i A†, A = H_eff ρ
        for j in 0..n {
            for i in 0..n {
                let a = scratch[i + j * n];
                let b = scratch[j + i * n].conj();
                out[i + j * n] = (b - a) * I;
            }
        }
        for c in &self.jumps {
            for &(i, k, v) in &c.entries {
                for &(j, l, w) in &c.entries {
                    out[i + j * n] += v * rho[k + l * n] * w.conj();
                }
            }
        }
    }

    /// `exp(L t) ρ` by Taylor series in `substeps` pieces.
    fn evolve(&self, rho: &mut CMat, t: f64, substeps: usize, tol: f64) {
        let n = self.n;
        let h = t / substeps as f64;
        let mut term = vec![ZERO; n * n];
        let mut next = vec![ZERO; n * n];
        let mut scratch = vec![ZERO; n * n];
        for _ in 0..substeps {
            let acc = rho.as_mut_slice();
            term.copy_from_slice(acc);
            for m in 1..200 {
                self.apply(&term, &mut next, &mut scratch);
                let s = h / m as f64;
                let mut big: f64 = 0.0;
                for (tz, nz) in term.iter_mut().zip(&next) {
                    *tz = nz * s;
                    big = big.max(tz.norm());
                }
                for (a, tz) in acc.iter_mut().zip(&term) {
                    *a += tz;
                }
                if big < tol {
                    break;
                }
            }
        }
        // Remove the round-off anti-Hermitian part.
        let herm = (&*rho + rho.adjoint()) * C64::new(0.5, 0.0);
        *rho = herm;
    }

    fn auto_substeps(&self, t: f64) -> usize {
        ((t * self.norm_bound / 0.5).ceil() as usize).max(1)
    }
}

/// Lindblad propagation across a pulse.
pub struct LindbladPropagator {
    dt: f64,
    gens: Vec<std::sync::Arc<Generator>>,
    opts: LindbladOptions,
}

impl LindbladPropagator {
    pub fn new(
        sys: &ControlSystem,
        pulse: &PulseEnvelope,
        collapse: &[CollapseOperator],
        opts: LindbladOptions,
    ) -> Result<Self> {
        pulse.validate()?;
        let d = sys.dim();
        let mut jump_sum = CMat::zeros(d, d);
        let mut jumps = Vec::new();
        for c in collapse {
            if c.op.nrows() != d {
                return Err(EstError::DimensionMismatch { expected: d, got: c.op.nrows() });
            }
            jump_sum += c.op.adjoint() * &c.op;
            jumps.push(Sparse::from_dense(&c.op));
        }
        let mut gens: Vec<std::sync::Arc<Generator>> = Vec::with_capacity(pulse.len());
        let mut idle: Option<std::sync::Arc<Generator>> = None;
        for k in 0..pulse.len() {
            let (e, o) = (pulse.eps[k], pulse.omega[k]);
            if e == ZERO && o == ZERO {
                let g = idle.get_or_insert_with(|| std::sync::Arc::new(Generator::new(&sys.h0, &jump_sum, &jumps)));
                gens.push(g.clone());
            } else {
                gens.push(std::sync::Arc::new(Generator::new(&sys.hamiltonian(e, o), &jump_sum, &jumps)));
            }
        }
        Ok(LindbladPropagator { dt: pulse.dt, gens, opts })
    }

    pub fn len(&self) -> usize {
        self.gens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gens.is_empty()
    }

    pub fn step(&self, k: usize, rho: &mut CMat) {
        let g = &self.gens[k];
        let s = self.opts.substeps.unwrap_or_else(|| g.auto_substeps(self.dt));
        g.evolve(rho, self.dt, s, self.opts.tol);
    }

    pub fn evolve(&self, rho0: &CMat) -> Result<CMat> {
        validate_density(rho0)?;
        let mut rho = rho0.clone();
        for k in 0..self.len() {
            self.step(k, &mut rho);
        }
        Ok(rho)
    }

    pub fn propagate(&self, rho0: &CMat) -> Result<Trajectory<CMat>> {
        validate_density(rho0)?;
        let mut states = Vec::with_capacity(self.len() + 1);
        states.push(rho0.clone());
        let mut rho = rho0.clone();
        for k in 0..self.len() {
            self.step(k, &mut rho);
            states.push(rho.clone());
        }
        let times = (0..=self.len()).map(|k| k as f64 * self.dt).collect();
        Ok(Trajectory { times, states })
    }
}

pub fn lindblad_propagate(
    sys: &ControlSystem,
    pulse: &PulseEnvelope,
    collapse: &[CollapseOperator],
    rho0: &CMat,
) -> Result<Trajectory<CMat>> {
    LindbladPropagator::new(sys, pulse, collapse, LindbladOptions::default())?.propagate(rho0)
}

/// Idle evolution under the static Hamiltonian for `duration_ns`, in 1 ns samples.
pub fn idle(sys: &ControlSystem, collapse: &[CollapseOperator], duration_ns: f64, rho: &CMat) -> Result<CMat> {
    let n = duration_ns.round() as usize;
    if n == 0 {
        return Ok(rho.clone());
    }
    let pulse = PulseEnvelope::zeros(n, duration_ns / n as f64);
    LindbladPropagator::new(sys, &pulse, collapse, LindbladOptions::default())?.evolve(rho)
}

pub fn pure_density(psi: &crate::linalg::CVec) -> CMat {
    psi * psi.adjoint()
}
