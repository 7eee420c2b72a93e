//! Cost functions and their exact gradients with respect to the drive samples.
//!
//! Each step is diagonalized, `H_k = V diag(λ) V†`. The derivative of
//! `exp(-i H_k dt)` along a generator `G` is `V (Γ ∘ V†GV) V†` with
//! `Γ_jl = -i dt e^{-i(λ_j+λ_l)dt/2} sinc((λ_j−λ_l)dt/2)`, and costates are
//! propagated backwards once for all tracked states.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codespace::State;
use crate::error::{EstError, Result};
use crate::grape::targets::{GateTarget, Mode};
use crate::hilbert::{fock_operators, rad_per_ns, ControlSystem, StepEigen};
use crate::linalg::{CMat, CVec, Sparse, C64, I, ZERO};
use crate::pulse::PulseEnvelope;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub w_fid: f64,
    pub w_et: f64,
    pub w_vel: f64,
}

impl CostWeights {
    pub fn new(w_fid: f64, w_et: f64, w_vel: f64) -> Self {
        CostWeights { w_fid, w_et, w_vel }
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.w_fid, self.w_et, self.w_vel];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(EstError::InvalidConfig("cost weights must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// Optional extra cost terms, off by default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtraWeights {
    /// Time-averaged squared photon-number imbalance of the two code words.
    pub w_photon: f64,
    /// Time-averaged leakage out of the instantaneous error space.
    pub w_leak: f64,
    /// Time-averaged population of cavity levels `≥ high_level` over the code tracks.
    pub w_high: f64,
    pub high_level: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub c1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    pub c3: f64,
    pub photon: f64,
    pub leak: f64,
    pub high: f64,
    pub total: f64,
    pub code_fidelity: f64,
    pub error_fidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub et_fidelity_avg: Option<f64>,
    pub et_singular_steps: usize,
}

/// Gradient packed as `∂C/∂Re + i ∂C/∂Im` per sample, drive amplitudes in MHz.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseGradient {
    pub eps: Vec<C64>,
    pub omega: Vec<C64>,
}

struct FidTerm {
    track: usize,
    target: CVec,
    weight: f64,
}

/// Cost functional for one target; evaluates any pulse of the system.
pub struct CostModel {
    sys: ControlSystem,
    tracks: Vec<State>,
    fid: Vec<FidTerm>,
    n_code: usize,
    n_err: usize,
    et_pairs: Vec<(usize, usize)>,
    vel_tracks: Vec<usize>,
    /// Code ±Z and error ±Z tracks for the photon and leakage terms.
    z_tracks: Option<[usize; 4]>,
    pub weights: CostWeights,
    pub extra: ExtraWeights,
    pub et_stride: usize,
    qubit_only: bool,
    a: CMat,
    a_sp: Sparse,
    q_sp: Sparse,
    n_sp: Sparse,
}

type RMat = nalgebra::DMatrix<f64>;

struct Forward {
    eigs: Vec<StepEigen>,
    phases: Vec<Vec<C64>>,
    /// States at `t_k`, `k = 0..=N`, one column per track.
    states: Vec<CMat>,
    /// `(Vᵀ D† Ψ_k)ᵀ` split into real and imaginary parts, `k = 0..N`.
    coeffs_t: Vec<(RMat, RMat)>,
}

fn split(m: &CMat) -> (RMat, RMat) {
    (m.map(|z| z.re), m.map(|z| z.im))
}

fn join(re: &RMat, im: &RMat) -> CMat {
    CMat::from_fn(re.nrows(), re.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)]))
}

fn scale_rows(m: &CMat, d: &[C64], conj: bool) -> CMat {
    let mut out = m.clone();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out[(i, j)] *= if conj { d[i].conj() } else { d[i] };
        }
    }
    out
}

/// `Vᵀ X` for real `V` and complex `X`.
fn vt_mul(v: &RMat, x: &CMat) -> CMat {
    let (xr, xi) = split(x);
    join(&v.tr_mul(&xr), &v.tr_mul(&xi))
}

/// `V X` for real `V` and complex `X`.
fn v_mul(v: &RMat, x: &CMat) -> CMat {
    let (xr, xi) = split(x);
    join(&(v * xr), &(v * xi))
}

fn sparse_col(sp: &Sparse, x: &CMat, col: usize) -> CVec {
    let mut out = CVec::zeros(x.nrows());
    for &(i, j, v) in &sp.entries {
        out[i] += v * x[(j, col)];
    }
    out
}

fn sparse_col_adj(sp: &Sparse, x: &CMat, col: usize) -> CVec {
    let mut out = CVec::zeros(x.nrows());
    for &(i, j, v) in &sp.entries {
        out[j] += v.conj() * x[(i, col)];
    }
    out
}

impl CostModel {
    pub fn new(sys: &ControlSystem, target: &GateTarget, weights: CostWeights) -> Result<Self> {
        target.validate()?;
        weights.validate()?;
        if !sys.h0_is_diagonal() {
            return Err(EstError::InvalidConfig("the static Hamiltonian must be diagonal in the Fock basis".into()));
        }
        let mut weights = weights;
        if target.mode == Mode::Ord {
            weights.w_et = 0.0;
        }
        let ops = fock_operators(&sys.cfg)?;
        let mut tracks = Vec::new();
        let mut fid = Vec::new();
        let n_code = target.pairs.len();
        let errs = target.error_pairs.as_deref().filter(|_| target.mode != Mode::Ord).unwrap_or(&[]);
        let n_err = errs.len();
        let fw = 1.0 / (n_code + n_err) as f64;
        for (i, (input, out)) in target.pairs.iter().chain(errs).enumerate() {
            if input.len() != sys.dim() {
                return Err(EstError::DimensionMismatch { expected: sys.dim(), got: input.len() });
            }
            tracks.push(input.clone());
            fid.push(FidTerm { track: i, target: out.clone(), weight: fw });
        }
        let et_pairs = if target.mode == Mode::Est {
            (0..n_code.min(n_err)).map(|i| (i, n_code + i)).collect()
        } else {
            Vec::new()
        };
        // Cardinal ordering puts ±Z first in both spaces.
        let z_tracks = if n_code >= 2 && n_err >= 2 { Some([0, 1, n_code, n_code + 1]) } else { None };
        Ok(CostModel {
            sys: sys.clone(),
            tracks,
            fid,
            n_code,
            n_err,
            et_pairs,
            vel_tracks: (0..n_code).collect(),
            z_tracks,
            weights,
            extra: ExtraWeights::default(),
            et_stride: 1,
            qubit_only: target.qubit_only,
            a_sp: Sparse::from_dense(&ops.a),
            q_sp: Sparse::from_dense(&ops.q),
            n_sp: Sparse::from_dense(&ops.n_cav),
            a: ops.a,
        })
    }

    /// Enables the photon-imbalance, leakage and high-level terms.
    pub fn with_extra(mut self, extra: ExtraWeights) -> Result<Self> {
        if (extra.w_photon > 0.0 || extra.w_leak > 0.0) && self.z_tracks.is_none() {
            return Err(EstError::InvalidConfig("photon and leakage terms need code and error tracks".into()));
        }
        if [extra.w_photon, extra.w_leak, extra.w_high].iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(EstError::InvalidConfig("extra weights must be finite and nonnegative".into()));
        }
        if extra.w_high > 0.0 && (extra.high_level == 0 || extra.high_level >= self.sys.cfg.cavity_dim) {
            return Err(EstError::InvalidConfig(format!(
                "high_level must lie in 1..{}",
                self.sys.cfg.cavity_dim
            )));
        }
        self.extra = extra;
        Ok(self)
    }

    pub fn system(&self) -> &ControlSystem {
        &self.sys
    }

    pub fn qubit_only(&self) -> bool {
        self.qubit_only
    }

    fn forward(&self, pulse: &PulseEnvelope) -> Result<Forward> {
        pulse.validate()?;
        let h0_eig = self.sys.step_eigen(ZERO, ZERO);
        let eigs: Vec<StepEigen> = (0..pulse.len())
            .into_par_iter()
            .map(|k| {
                let (e, o) = (pulse.eps[k], pulse.omega[k]);
                if e == ZERO && o == ZERO {
                    h0_eig.clone()
                } else {
                    self.sys.step_eigen(e, o)
                }
            })
            .collect();
        let dt = pulse.dt;
        let phases: Vec<Vec<C64>> =
            eigs.iter().map(|s| s.values.iter().map(|&l| C64::from_polar(1.0, -l * dt)).collect()).collect();
        let d = self.sys.dim();
        let mut psi = CMat::from_fn(d, self.tracks.len(), |i, s| self.tracks[s][i]);
        let mut states = Vec::with_capacity(pulse.len() + 1);
        let mut coeffs_t = Vec::with_capacity(pulse.len());
        for k in 0..pulse.len() {
            let eig = &eigs[k];
            let mut c = vt_mul(&eig.vr, &scale_rows(&psi, &eig.gauge, true));
            let (cr, ci) = split(&c);
            coeffs_t.push((cr.transpose(), ci.transpose()));
            for j in 0..d {
                let p = phases[k][j];
                for s in 0..c.ncols() {
                    c[(j, s)] *= p;
                }
            }
            let next = scale_rows(&v_mul(&eig.vr, &c), &eig.gauge, false);
            states.push(std::mem::replace(&mut psi, next));
        }
        states.push(psi);
        Ok(Forward { eigs, phases, states, coeffs_t })
    }

    pub fn evaluate(&self, pulse: &PulseEnvelope) -> Result<CostBreakdown> {
        let fw = self.forward(pulse)?;
        Ok(self.costs(&fw, pulse.dt, None))
    }

    pub fn evaluate_with_gradient(&self, pulse: &PulseEnvelope) -> Result<(CostBreakdown, PulseGradient)> {
        let fw = self.forward(pulse)?;
        let nk = pulse.len() + 1;
        let d = self.sys.dim();
        let mut g = vec![CMat::zeros(d, self.tracks.len()); nk];
        let costs = self.costs(&fw, pulse.dt, Some(&mut g));
        let grad = self.backward(&fw, pulse.dt, g);
        Ok((costs, grad))
    }

    /// Cost values; when `g` is given, accumulates `∂C_tot/∂ψ*` per step and track.
    fn costs(&self, fw: &Forward, dt: f64, mut g: Option<&mut Vec<CMat>>) -> CostBreakdown {
        let w = self.weights;
        let nsteps = fw.states.len() - 1;
        let col = |k: usize, s: usize| -> CVec { fw.states[k].column(s).into_owned() };
        let mut out = CostBreakdown::default();

        // C1
        let mut fsum_code = 0.0;
        let mut fsum_err = 0.0;
        let mut c1 = 1.0;
        for (i, t) in self.fid.iter().enumerate() {
            let psi = col(nsteps, t.track);
            let o = t.target.dotc(&psi);
            let f = o.norm_sqr();
            c1 -= t.weight * f;
            if i < self.n_code {
                fsum_code += f;
            } else {
                fsum_err += f;
            }
            if let Some(g) = g.as_deref_mut() {
                if w.w_fid != 0.0 {
                    let mut gc = g[nsteps].column_mut(t.track);
                    gc -= &t.target * (o * (w.w_fid * t.weight));
                }
            }
        }
        out.c1 = c1;
        out.code_fidelity = fsum_code / self.n_code as f64;
        if self.n_err > 0 {
            out.error_fidelity = Some(fsum_err / self.n_err as f64);
        }

        // C2
        if !self.et_pairs.is_empty() {
            let stride = self.et_stride.max(1);
            let idx: Vec<usize> = (0..nsteps.max(1)).step_by(stride).collect();
            let norm = 1.0 / (self.et_pairs.len() * idx.len()) as f64;
            let mut fsum = 0.0;
            for &(c, e) in &self.et_pairs {
                for &i in &idx {
                    let apc = sparse_col(&self.a_sp, &fw.states[i], c);
                    let nu = apc.norm_squared();
                    if nu < 1e-6 {
                        out.et_singular_steps += 1;
                        continue;
                    }
                    let pe = col(i, e);
                    let o = pe.dotc(&apc);
                    let h = o.norm_sqr() / nu;
                    fsum += h;
                    if let Some(g) = g.as_deref_mut() {
                        if w.w_et != 0.0 {
                            let s = -w.w_et * norm;
                            let mut ge = g[i].column_mut(e);
                            ge += &apc * (o.conj() * (s / nu));
                            let adpe = sparse_col_adj(&self.a_sp, &fw.states[i], e);
                            let npc = sparse_col(&self.n_sp, &fw.states[i], c);
                            let mut gc = g[i].column_mut(c);
                            gc += adpe * (o * (s / nu)) - npc * C64::new(s * o.norm_sqr() / (nu * nu), 0.0);
                        }
                    }
                }
            }
            out.et_fidelity_avg = Some(fsum * norm);
            out.c2 = Some(1.0 - fsum * norm);
        }

        // C3
        let mut c3 = 0.0;
        for &s in &self.vel_tracks {
            let mut v = Vec::with_capacity(nsteps);
            let mut parts = Vec::with_capacity(nsteps);
            let mut prev = col(0, s);
            for i in 0..nsteps {
                let next = col(i + 1, s);
                let rho = prev.dotc(&next);
                let perp = &next - &prev * rho;
                let sn = perp.norm();
                let ar = rho.norm();
                v.push(2.0 / dt * sn.atan2(ar));
                parts.push((rho, ar, sn));
                prev = next;
            }
            let nv = v.len().max(1) as f64;
            let mean = v.iter().sum::<f64>() / nv;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nv;
            c3 += var / self.vel_tracks.len() as f64;
            if let Some(g) = g.as_deref_mut() {
                if w.w_vel != 0.0 {
                    let pre = w.w_vel / self.vel_tracks.len() as f64;
                    for i in 0..nsteps {
                        let (rho, ar, sn) = parts[i];
                        if sn < 1e-12 || ar < 1e-12 {
                            continue;
                        }
                        // dC/dv_i · dv/dθ · dθ/d|ρ|
                        let coef = pre * 2.0 * (v[i] - mean) / nv * (2.0 / dt) * (-1.0 / sn) / (2.0 * ar);
                        let gi1 = col(i, s) * (rho * coef);
                        let gi = col(i + 1, s) * (rho.conj() * coef);
                        let mut c_next = g[i + 1].column_mut(s);
                        c_next += gi1;
                        let mut c_here = g[i].column_mut(s);
                        c_here += gi;
                    }
                }
            }
        }
        out.c3 = c3;

        // Extra terms
        if let Some([c0, c1t, e0, e1]) = self.z_tracks {
            let inv = 1.0 / (nsteps + 1) as f64;
            if self.extra.w_photon > 0.0 {
                let mut acc = 0.0;
                for k in 0..=nsteps {
                    let np0 = sparse_col(&self.n_sp, &fw.states[k], c0);
                    let np1 = sparse_col(&self.n_sp, &fw.states[k], c1t);
                    let delta = col(k, c0).dotc(&np0).re - col(k, c1t).dotc(&np1).re;
                    acc += delta * delta * inv;
                    if let Some(g) = g.as_deref_mut() {
                        let s = self.extra.w_photon * 2.0 * delta * inv;
                        let mut g0 = g[k].column_mut(c0);
                        g0 += np0 * C64::new(s, 0.0);
                        let mut g1 = g[k].column_mut(c1t);
                        g1 -= np1 * C64::new(s, 0.0);
                    }
                }
                out.photon = acc;
            }
            if self.extra.w_leak > 0.0 {
                let mut acc = 0.0;
                for k in 0..=nsteps {
                    let u = [col(k, c0), col(k, c1t)];
                    let psis = [col(k, e0), col(k, e1)];
                    let (leak, gu, gpsi) = leakage_and_grad(&self.a, [&u[0], &u[1]], [&psis[0], &psis[1]]);
                    acc += leak * inv;
                    if let Some(g) = g.as_deref_mut() {
                        let s = C64::new(self.extra.w_leak * inv, 0.0);
                        for (t, v) in [(c0, &gu[0]), (c1t, &gu[1]), (e0, &gpsi[0]), (e1, &gpsi[1])] {
                            let mut gc = g[k].column_mut(t);
                            gc += v * s;
                        }
                    }
                }
                out.leak = acc;
            }
        }

        if self.extra.w_high > 0.0 {
            let cfg = &self.sys.cfg;
            let high: Vec<usize> = (self.extra.high_level..cfg.cavity_dim)
                .flat_map(|n| (0..cfg.qubit_dim).map(move |j| cfg.index(n, j)))
                .collect();
            let inv = 1.0 / ((nsteps + 1) * self.n_code) as f64;
            let mut acc = 0.0;
            for k in 0..=nsteps {
                for s in 0..self.n_code {
                    for &i in &high {
                        let z = fw.states[k][(i, s)];
                        acc += z.norm_sqr() * inv;
                        if let Some(g) = g.as_deref_mut() {
                            g[k][(i, s)] += z * (self.extra.w_high * inv);
                        }
                    }
                }
            }
            out.high = acc;
        }

        out.total = w.w_fid * out.c1
            + w.w_et * out.c2.unwrap_or(0.0)
            + w.w_vel * out.c3
            + self.extra.w_photon * out.photon
            + self.extra.w_leak * out.leak
            + self.extra.w_high * out.high;
        out
    }

    fn backward(&self, fw: &Forward, dt: f64, g: Vec<CMat>) -> PulseGradient {
        let n = fw.eigs.len();
        let d = self.sys.dim();
        let c = rad_per_ns(1.0);
        let mut lam = g[n].clone();
        let mut grad = PulseGradient { eps: vec![ZERO; n], omega: vec![ZERO; n] };
        let mut y = CMat::zeros(d, d);
        for k in (0..n).rev() {
            let eig = &fw.eigs[k];
            let vr = &eig.vr;
            let e = &fw.phases[k];
            let mut lp = vt_mul(vr, &scale_rows(&lam, &eig.gauge, true));
            // M'ᵀ = conj(Λ') Cᵀ
            let (lr, li) = split(&lp);
            let (ctr, cti) = &fw.coeffs_t[k];
            let mre = &lr * ctr + &li * cti;
            let mim = &lr * cti - &li * ctr;
            // Y = Γ ∘ M'ᵀ
            for l in 0..d {
                for j in 0..d {
                    let dl = eig.values[j] - eig.values[l];
                    let gamma = if (dl * dt).abs() > 1e-4 {
                        (e[j] - e[l]) / dl
                    } else {
                        let x = 0.5 * dl * dt;
                        C64::from_polar(dt * (1.0 - x * x / 6.0), -0.5 * (eig.values[j] + eig.values[l]) * dt) * (-I)
                    };
                    y[(j, l)] = gamma * C64::new(mre[(j, l)], mim[(j, l)]);
                }
            }
            let wm = v_mul(vr, &y);
            let gauge = &eig.gauge;
            // Z_mn = conj(D_m) D_n Σ_l W_ml V_nl
            let z = |m: usize, nn: usize| -> C64 {
                let mut s = ZERO;
                for l in 0..d {
                    s += wm[(m, l)] * vr[(nn, l)];
                }
                s * gauge[m].conj() * gauge[nn]
            };
            let pair = |op: &Sparse| -> (C64, C64) {
                let mut t = ZERO;
                let mut td = ZERO;
                for &(m, nn, val) in &op.entries {
                    t += val * z(m, nn);
                    td += val.conj() * z(nn, m);
                }
                (t, td)
            };
            if !self.qubit_only {
                let (ta, tad) = pair(&self.a_sp);
                grad.eps[k] = C64::new(2.0 * (ta + tad).re * c, 2.0 * (I * (ta - tad)).re * c);
            }
            let (tq, tqd) = pair(&self.q_sp);
            grad.omega[k] = C64::new(2.0 * (tq + tqd).re * c, 2.0 * (I * (tq - tqd)).re * c);
            // λ(k) = U_k† λ(k+1) + g(k)
            for j in 0..d {
                let p = e[j].conj();
                for s in 0..lp.ncols() {
                    lp[(j, s)] *= p;
                }
            }
            lam = scale_rows(&v_mul(vr, &lp), &eig.gauge, false) + &g[k];
        }
        grad
    }
}

/// Leakage `1 − ½ Σ_i ⟨ψ_i|P|ψ_i⟩` with `P` the projector on `span{a u_0, a u_1}`,
/// and its Wirtinger gradients with respect to `u_j` and `ψ_i`.
fn leakage_and_grad(a: &CMat, u: [&CVec; 2], psi: [&CVec; 2]) -> (f64, [CVec; 2], [CVec; 2]) {
    let b = [a * u[0], a * u[1]];
    let gm = nalgebra::Matrix2::new(b[0].dotc(&b[0]), b[0].dotc(&b[1]), b[1].dotc(&b[0]), b[1].dotc(&b[1]));
    let ginv = gm.try_inverse().unwrap_or_else(nalgebra::Matrix2::zeros);
    let mut f = 0.0;
    let mut gpsi = [CVec::zeros(u[0].len()), CVec::zeros(u[0].len())];
    let mut x = [CVec::zeros(u[0].len()), CVec::zeros(u[0].len())];
    for i in 0..2 {
        let bp = nalgebra::Vector2::new(b[0].dotc(psi[i]), b[1].dotc(psi[i]));
        let c = ginv * bp;
        let ppsi = &b[0] * c[0] + &b[1] * c[1];
        f += psi[i].dotc(&ppsi).re;
        let perp = psi[i] - &ppsi;
        for j in 0..2 {
            x[j] += &perp * c[j].conj();
        }
        gpsi[i] = ppsi * C64::new(-0.5, 0.0);
    }
    let gu = [a.ad_mul(&x[0]) * C64::new(-0.5, 0.0), a.ad_mul(&x[1]) * C64::new(-0.5, 0.0)];
    (1.0 - 0.5 * f, gu, gpsi)
}

pub fn cost_fidelity(model: &CostModel, pulse: &PulseEnvelope) -> Result<f64> {
    Ok(model.evaluate(pulse)?.c1)
}

pub fn cost_et(model: &CostModel, pulse: &PulseEnvelope) -> Result<f64> {
    model
        .evaluate(pulse)?
        .c2
        .ok_or_else(|| EstError::InvalidConfig("ET cost is only defined in EST mode".into()))
}

pub fn cost_velocity_variance(model: &CostModel, pulse: &PulseEnvelope) -> Result<f64> {
    Ok(model.evaluate(pulse)?.c3)
}

pub fn total_cost(model: &CostModel, pulse: &PulseEnvelope) -> Result<f64> {
    Ok(model.evaluate(pulse)?.total)
}

pub fn gradient(model: &CostModel, pulse: &PulseEnvelope) -> Result<PulseGradient> {
    Ok(model.evaluate_with_gradient(pulse)?.1)
}
