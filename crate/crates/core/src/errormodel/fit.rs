//! Levenberg–Marquardt fits of the decay models to fidelity-versus-gate-count data.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{code_fidelity_curve, error_fidelity_curve, measured_fidelity, p_odd_vs_gates, parity_posterior};
use super::{DecayModelParams, FidelityCurve};
use crate::error::{EstError, Result};

/// Readout aliasing applied on top of the error-space curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aliasing {
    pub p_jump: f64,
    pub p_prep: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    /// Free `γ_C`.
    Code,
    /// Free `γ_E` and `F_err|jump`, `γ_C` held at its given value.
    Error { aliasing: Option<Aliasing> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iterations: 500, tol: 1e-15 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: DecayModelParams,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub model: Vec<f64>,
}

pub fn model_value(kind: FitKind, n: u32, p: &DecayModelParams) -> Result<f64> {
    match kind {
        FitKind::Code => Ok(code_fidelity_curve(n as f64, p)),
        FitKind::Error { aliasing: None } => Ok(error_fidelity_curve(n, p)),
        FitKind::Error { aliasing: Some(al) } => {
            let odd = p_odd_vs_gates(n, al.p_jump, al.p_prep)?;
            let (post, _) = parity_posterior(odd.p_odd, p.eps_parity)?;
            Ok(measured_fidelity(post, error_fidelity_curve(n, p), p.f_alias))
        }
    }
}

fn get_free(kind: FitKind, p: &DecayModelParams) -> Vec<f64> {
    match kind {
        FitKind::Code => vec![p.gamma_c],
        FitKind::Error { .. } => vec![p.gamma_e, p.f_err_jump],
    }
}

fn set_free(kind: FitKind, p: &DecayModelParams, x: &[f64]) -> DecayModelParams {
    let mut q = *p;
    match kind {
        FitKind::Code => q.gamma_c = x[0].max(0.0),
        FitKind::Error { .. } => {
            q.gamma_e = x[0].max(0.0);
            q.f_err_jump = x[1].clamp(0.0, 1.0);
        }
    }
    q
}

fn residuals(kind: FitKind, curve: &FidelityCurve, p: &DecayModelParams) -> Result<DVector<f64>> {
    let mut r = DVector::zeros(curve.counts.len());
    for (i, (&n, &f)) in curve.counts.iter().zip(&curve.fidelities).enumerate() {
        let w = curve.stderr.as_ref().map(|s| s[i]).filter(|s| *s > 0.0).unwrap_or(1.0);
        r[i] = (model_value(kind, n, p)? - f) / w;
    }
    Ok(r)
}

/// Deterministic starting point from the data.
fn initial_guess(kind: FitKind, curve: &FidelityCurve, fixed: &DecayModelParams) -> Vec<f64> {
    let (n0, f0) = (curve.counts[0] as f64, curve.fidelities[0]);
    let (n1, f1) = (*curve.counts.last().unwrap() as f64, *curve.fidelities.last().unwrap());
    match kind {
        FitKind::Code => {
            let y0 = ((f0 - fixed.b) / fixed.a).max(1e-6);
            let y1 = ((f1 - fixed.b) / fixed.a).max(1e-6);
            let g = if n1 > n0 { (y0.ln() - y1.ln()) / (n1 - n0) } else { 0.01 };
            vec![g.max(1e-4)]
        }
        FitKind::Error { .. } => {
            let fj = ((f0 - fixed.g) / fixed.d).clamp(0.05, 1.0);
            vec![fixed.gamma_c.max(1e-3) * 2.0, fj]
        }
    }
}

pub fn fit_decay_model(
    curve: &FidelityCurve,
    kind: FitKind,
    fixed: &DecayModelParams,
    opts: &FitOptions,
) -> Result<FitResult> {
    curve.validate()?;
    if curve.counts.len() < 3 {
        return Err(EstError::InvalidConfig("at least three data points are needed".into()));
    }
    let mut x = initial_guess(kind, curve, fixed);
    let np = x.len();
    let mut p = set_free(kind, fixed, &x);
    let mut r = residuals(kind, curve, &p)?;
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut it = 0;
    while it < opts.max_iterations {
        it += 1;
        let mut jac = DMatrix::zeros(r.len(), np);
        for j in 0..np {
            let h = 1e-7 * x[j].abs().max(1e-3);
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let rp = residuals(kind, curve, &set_free(kind, fixed, &xp))?;
            let rm = residuals(kind, curve, &set_free(kind, fixed, &xm))?;
            jac.set_column(j, &((rp - rm) / (2.0 * h)));
        }
        let jtj = jac.tr_mul(&jac);
        let jtr = jac.tr_mul(&r);
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for j in 0..np {
                a[(j, j)] += lambda * jtj[(j, j)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let pn = set_free(kind, fixed, &xn);
            let rn = residuals(kind, curve, &pn)?;
            let cn = rn.norm_squared();
            if cn <= cost {
                let rel = step.norm() / (x.iter().map(|v| v * v).sum::<f64>().sqrt() + 1e-12);
                let dc = cost - cn;
                x = get_free(kind, &pn);
                p = pn;
                r = rn;
                cost = cn;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < 1e-13 || dc <= opts.tol * cost.max(1e-300) {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No downhill step at any damping: a stationary point.
            converged = true;
        }
        if converged {
            break;
        }
    }
    let model = curve.counts.iter().map(|&n| model_value(kind, n, &p)).collect::<Result<_>>()?;
    Ok(FitResult { params: p, residual_norm: cost.sqrt(), iterations: it, converged, model })
}

/// Residual bootstrap: standard deviations of the free parameters over `samples` refits.
pub fn bootstrap_fit(
    curve: &FidelityCurve,
    kind: FitKind,
    fixed: &DecayModelParams,
    samples: usize,
    seed: u64,
) -> Result<(FitResult, Vec<f64>)> {
    let base = fit_decay_model(curve, kind, fixed, &FitOptions::default())?;
    let res: Vec<f64> = curve.fidelities.iter().zip(&base.model).map(|(f, m)| f - m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let free0 = get_free(kind, &base.params);
    let mut sums = vec![0.0; free0.len()];
    let mut sq = vec![0.0; free0.len()];
    for _ in 0..samples {
        let fid: Vec<f64> = base
            .model
            .iter()
            .map(|m| (m + res[rng.gen_range(0..res.len())]).clamp(0.0, 1.0))
            .collect();
        let c = FidelityCurve { counts: curve.counts.clone(), fidelities: fid, stderr: curve.stderr.clone() };
        let f = fit_decay_model(&c, kind, fixed, &FitOptions::default())?;
        for (j, v) in get_free(kind, &f.params).into_iter().enumerate() {
            sums[j] += v;
            sq[j] += v * v;
        }
    }
    let n = samples as f64;
    let sd = sums.iter().zip(&sq).map(|(s, q)| ((q / n - (s / n).powi(2)).max(0.0)).sqrt()).collect();
    Ok((base, sd))
}

/// Reads `N,fidelity[,stderr]` rows; a header line and `#` comments are skipped.
pub fn read_curve_csv(path: &Path) -> Result<FidelityCurve> {
    let text = std::fs::read_to_string(path)?;
    parse_curve_csv(&text)
}

pub fn parse_curve_csv(text: &str) -> Result<FidelityCurve> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut counts = Vec::new();
    let mut fids = Vec::new();
    let mut errs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| EstError::Parse(e.to_string()))?;
        if i == 0 && rec.get(0).map_or(false, |s| s.eq_ignore_ascii_case("n")) {
            continue;
        }
        let field = |j: usize| -> Result<Option<f64>> {
            match rec.get(j) {
                None | Some("") => Ok(None),
                Some(s) => s
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| EstError::Parse(format!("row {}: bad number {s:?}", i + 1))),
            }
        };
        let n = field(0)?.ok_or_else(|| EstError::Parse(format!("row {}: missing N", i + 1)))?;
        let f = field(1)?.ok_or_else(|| EstError::Parse(format!("row {}: missing fidelity", i + 1)))?;
        if n < 0.0 || n.fract() != 0.0 {
            return Err(EstError::Parse(format!("row {}: N must be a nonnegative integer", i + 1)));
        }
        counts.push(n as u32);
        fids.push(f);
        errs.push(field(2)?);
    }
    let stderr = if !errs.is_empty() && errs.iter().all(|e| e.is_some()) {
        Some(errs.into_iter().map(|e| e.unwrap()).collect())
    } else {
        None
    };
    let c = FidelityCurve { counts, fidelities: fids, stderr };
    c.validate()?;
    Ok(c)
}
