//! Wigner function of a cavity state from exact displacement matrix elements.

use std::f64::consts::PI;

use crate::hilbert::HilbertConfig;
use crate::linalg::{CMat, C64};

/// Partial trace over the transmon.
pub fn reduced_cavity(rho: &CMat, cfg: &HilbertConfig) -> CMat {
    let dc = cfg.cavity_dim;
    let mut out = CMat::zeros(dc, dc);
    for n in 0..dc {
        for m in 0..dc {
            let mut s = C64::new(0.0, 0.0);
            for j in 0..cfg.qubit_dim {
                s += rho[(cfg.index(n, j), cfg.index(m, j))];
            }
            out[(n, m)] = s;
        }
    }
    out
}

/// Generalized Laguerre polynomials `L_k^{(alpha)}(x)` for `k = 0..=kmax`.
fn laguerre(kmax: usize, alpha: f64, x: f64) -> Vec<f64> {
    let mut l = vec![1.0; kmax + 1];
    if kmax >= 1 {
        l[1] = 1.0 + alpha - x;
    }
    for k in 1..kmax {
        let kf = k as f64;
        l[k + 1] = ((2.0 * kf + 1.0 + alpha - x) * l[k] - (kf + alpha) * l[k - 1]) / (kf + 1.0);
    }
    l
}

/// `⟨m|D(β)|n⟩` for `m, n < d`.
pub fn displacement_elements(beta: C64, d: usize) -> CMat {
    let x = beta.norm_sqr();
    let gauss = (-0.5 * x).exp();
    let mut ln_fact = vec![0.0; d + 1];
    for k in 1..=d {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let mut out = CMat::zeros(d, d);
    for diff in 0..d {
        let lag = laguerre(d - 1 - diff, diff as f64, x);
        for lo in 0..d - diff {
            let hi = lo + diff;
            let ratio = (0.5 * (ln_fact[lo] - ln_fact[hi])).exp();
            let base = ratio * gauss * lag[lo];
            // m ≥ n: β^{m−n}; m < n: (−β*)^{n−m}
            out[(hi, lo)] = beta.powu(diff as u32) * base;
            if diff > 0 {
                out[(lo, hi)] = (-beta.conj()).powu(diff as u32) * base;
            }
        }
    }
    out
}

/// `W(α) = (2/π) Tr[D(α) P D(α)† ρ]` for a cavity density matrix.
pub fn wigner(rho_cav: &CMat, points: &[C64]) -> Vec<f64> {
    let d = rho_cav.nrows();
    points
        .iter()
        .map(|&alpha| {
            // D(α) P D(α)† = D(2α) P
            let dm = displacement_elements(alpha * 2.0, d);
            let mut s = C64::new(0.0, 0.0);
            for m in 0..d {
                for n in 0..d {
                    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                    s += rho_cav[(n, m)] * dm[(m, n)] * sign;
                }
            }
            2.0 / PI * s.re
        })
        .collect()
}

/// Square grid `re, im ∈ [-radius, radius]` with spacing `step`.
pub fn square_grid(radius: f64, step: f64) -> Vec<C64> {
    let n = (radius / step).round() as i64;
    let mut pts = Vec::new();
    for i in -n..=n {
        for r in -n..=n {
            pts.push(C64::new(r as f64 * step, i as f64 * step));
        }
    }
    pts
}
