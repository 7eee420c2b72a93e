use anyhow::{bail, Context, Result};
use est_core::codespace::{cardinal_states, kitten_code, CodeSubspace, State, CARDINAL_LABELS};
use est_core::dynamics::PulsePropagator;
use est_core::errormodel::fit::{bootstrap_fit, fit_decay_model, read_curve_csv, FitKind, FitOptions, FitResult};
use est_core::experiment::{
    gate_jump_sweep, lossy_gate_report, run_sequence, sequence_csv, SequenceGate, SequenceSpec,
};
use est_core::grape::{
    aqec_target, gate_summary, logical_h, logical_t, logical_x, optimize, target_by_name, GateTarget, Mode,
    PulseShape, RunStatus,
};
use est_core::hilbert::{fock_operators, ControlSystem};
use est_core::lindblad::pure_density;
use est_core::metrics::metric_series;
use est_core::metrics::wigner::{reduced_cavity, square_grid, wigner};
use serde::Serialize;

use crate::config::*;
use crate::manifest::RunManifest;
use crate::{CommonArgs, Outcome};

pub fn run(name: &str, args: &CommonArgs) -> Result<Outcome> {
    match name {
        "optimize" => cmd_optimize(args),
        "metrics" => cmd_metrics(args),
        "jump-sweep" => cmd_jump_sweep(args),
        "experiment" => cmd_experiment(args),
        "fit" => cmd_fit(args),
        "wigner" => cmd_wigner(args),
        other => bail!("unknown command {other}"),
    }
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn cardinal_index(label: &str) -> Result<usize> {
    CARDINAL_LABELS
        .iter()
        .position(|l| *l == label)
        .with_context(|| format!("unknown cardinal state {label:?}; expected one of {CARDINAL_LABELS:?}"))
}

fn target_for(sys: &ControlSystem, code: &CodeSubspace, name: &str, mode: Mode) -> Result<GateTarget> {
    Ok(target_by_name(name, code, &sys.cfg, &sys.h0, mode)?)
}

fn cmd_optimize(args: &CommonArgs) -> Result<Outcome> {
    let cfg: OptimizeConfig = load_config(&args.config)?;
    let mut schedule = cfg.schedule.clone();
    if let Some(s) = args.seed {
        schedule.seed = s;
    }
    let mut manifest = RunManifest::start("optimize", &args.config, Some(schedule.seed), args.threads, &args.out)?;
    let sys = load_system(&args.config, &cfg.system, cfg.cavity_dim)?;
    let code = kitten_code(&sys.cfg)?;
    let target = match (cfg.target.as_str(), cfg.compensate_ns) {
        ("AQEC", Some(tau)) => aqec_target(&code, &sys.cfg, &sys.h0, Some(tau))?.with_mode(cfg.mode)?,
        (_, Some(_)) => bail!("compensate_ns applies only to the AQEC target"),
        (name, None) => target_for(&sys, &code, name, cfg.mode)?,
    };
    let shape = PulseShape { duration_ns: cfg.duration_ns, dt_ns: cfg.dt_ns, constraints: cfg.constraints };
    let (pulse, report) = optimize(&sys, &target, &shape, &schedule, |_| {})?;
    manifest.output("pulse.csv", &pulse.to_text())?;
    manifest.output("report.json", &json(&report)?)?;
    manifest.output("trace.csv", &report.trace_csv())?;
    let status = report.status;
    manifest.finish()?;
    Ok(match status {
        RunStatus::Converged => Outcome::Ok,
        RunStatus::BudgetExhausted => Outcome::Warning(format!(
            "budget exhausted; best iterate written (c1 = {:.3e})",
            report.final_costs.c1
        )),
    })
}

#[derive(Serialize)]
struct MetricsSummary {
    mean_delta_qec: f64,
    mean_leakage: f64,
    mean_mismatch: f64,
    code_fidelity: f64,
    error_fidelity: Option<f64>,
    et_fidelity_avg: Option<f64>,
    max_active_level: Option<usize>,
}

fn cmd_metrics(args: &CommonArgs) -> Result<Outcome> {
    let cfg: MetricsConfig = load_config(&args.config)?;
    let mut manifest = RunManifest::start("metrics", &args.config, args.seed, args.threads, &args.out)?;
    let sys = load_system(&args.config, &cfg.system, cfg.cavity_dim)?;
    let pulse = load_pulse(&args.config, &cfg.pulse)?;
    let code = kitten_code(&sys.cfg)?;
    let ops = fock_operators(&sys.cfg)?;
    let psi0 = cardinal_states(&code)[cardinal_index(&cfg.initial)?].clone();
    let prop = PulsePropagator::new(&sys, &pulse)?;
    let series = metric_series(&prop, &code, &ops.a, &ops.n_cav, &psi0)?;
    let target = target_for(&sys, &code, &cfg.target, Mode::Ord)?;
    let g = gate_summary(&sys, &pulse, &target)?;
    let summary = MetricsSummary {
        mean_delta_qec: series.mean_delta_qec(),
        mean_leakage: series.mean_leakage(),
        mean_mismatch: series.mean_mismatch(),
        code_fidelity: g.code_fidelity,
        error_fidelity: g.error_fidelity,
        et_fidelity_avg: g.et_fidelity_avg,
        max_active_level: g.max_active_level,
    };
    manifest.output("metrics.csv", &series.to_csv())?;
    manifest.output("summary.json", &json(&summary)?)?;
    manifest.finish()?;
    Ok(Outcome::Ok)
}

#[derive(Serialize)]
struct JumpSummary {
    n_times: usize,
    mean_infidelity: f64,
}

fn cmd_jump_sweep(args: &CommonArgs) -> Result<Outcome> {
    let cfg: JumpSweepConfig = load_config(&args.config)?;
    let mut manifest = RunManifest::start("jump-sweep", &args.config, args.seed, args.threads, &args.out)?;
    let sys = load_system(&args.config, &cfg.system, cfg.cavity_dim)?;
    let pulse = load_pulse(&args.config, &cfg.pulse)?;
    let code = kitten_code(&sys.cfg)?;
    let target = target_for(&sys, &code, &cfg.target, Mode::Ord)?;
    let sweep = gate_jump_sweep(&sys, &pulse, &target, cfg.n_times)?;
    manifest.output("jump_sweep.csv", &sweep.to_csv())?;
    manifest.output("summary.json", &json(&JumpSummary { n_times: cfg.n_times, mean_infidelity: sweep.mean })?)?;
    manifest.finish()?;
    Ok(Outcome::Ok)
}

fn cmd_experiment(args: &CommonArgs) -> Result<Outcome> {
    let cfg: ExperimentConfig = load_config(&args.config)?;
    let mut manifest = RunManifest::start("experiment", &args.config, args.seed, args.threads, &args.out)?;
    let sys = load_system(&args.config, &cfg.system, cfg.cavity_dim)?;
    let code = kitten_code(&sys.cfg)?;
    let collapse = if cfg.lossy { sys.collapse_operators()? } else { Vec::new() };
    match cfg.kind {
        ExperimentKind::GateReport => {
            let path = cfg.pulse.as_ref().context("gate_report needs `pulse`")?;
            let pulse = load_pulse(&args.config, path)?;
            let target = target_for(&sys, &code, &cfg.target, Mode::Ord)?;
            let report = lossy_gate_report(&sys, &pulse, &target, &code, &collapse)?;
            let opt = |v: Option<f64>| v.map_or("nan".to_string(), |x| x.to_string());
            let csv = format!(
                "# quantity,average_fidelity\nnet,{}\ncode_space,{}\nerror_space,{}\net,{}\nideal_qec,{}\n",
                report.net,
                report.code_space,
                opt(report.error_space),
                opt(report.et),
                report.ideal_qec
            );
            manifest.output("gate_report.csv", &csv)?;
            manifest.output("gate_report.json", &json(&report)?)?;
        }
        ExperimentKind::Sequence => {
            if cfg.counts.is_empty() {
                bail!("invalid configuration at `counts`: a sequence needs at least one gate count");
            }
            let gates = cfg
                .gates
                .iter()
                .map(|g| -> Result<SequenceGate> {
                    let logical = match g.name.as_str() {
                        "identity" => return Ok(SequenceGate::Identity),
                        "X" => logical_x(),
                        "H" => logical_h(),
                        "T" => logical_t(),
                        other => bail!("invalid configuration at `gates.name`: unknown gate {other:?}"),
                    };
                    let path = g.pulse.as_ref().with_context(|| format!("gate {} needs `pulse`", g.name))?;
                    Ok(SequenceGate::Pulse { pulse: load_pulse(&args.config, path)?, logical })
                })
                .collect::<Result<Vec<_>>>()?;
            let recovery_pulse = cfg.recovery_pulse.as_ref().map(|p| load_pulse(&args.config, p)).transpose()?;
            let spec = SequenceSpec {
                gates,
                recovery: cfg.recovery,
                recovery_pulse,
                reset_ns: cfg.reset_ns,
                counts: cfg.counts.clone(),
                lossy: cfg.lossy,
            };
            let points = run_sequence(&sys, &code, &spec, &collapse)?;
            manifest.output("sequence.csv", &sequence_csv(&points))?;
        }
    }
    manifest.finish()?;
    Ok(Outcome::Ok)
}

fn fit_report_text(fit: &FitResult, kind: FitKind, sd: Option<&[f64]>, ns: &[u32], data: &[f64]) -> String {
    let p = &fit.params;
    let mut s = String::new();
    s.push_str(&format!("# decay-model fit ({})\n", match kind {
        FitKind::Code => "code",
        FitKind::Error { .. } => "error",
    }));
    let free: Vec<(&str, f64)> = match kind {
        FitKind::Code => vec![("gamma_C", p.gamma_c)],
        FitKind::Error { .. } => vec![("gamma_E", p.gamma_e), ("F_err_jump", p.f_err_jump)],
    };
    for (i, (name, v)) in free.iter().enumerate() {
        match sd {
            Some(sd) => s.push_str(&format!("{name} = {v} +/- {}\n", sd[i])),
            None => s.push_str(&format!("{name} = {v}\n")),
        }
    }
    s.push_str(&format!("residual_norm = {}\n", fit.residual_norm));
    s.push_str(&format!("iterations = {}\nconverged = {}\n", fit.iterations, fit.converged));
    s.push_str("# N,fidelity,model\n");
    for ((n, f), m) in ns.iter().zip(data).zip(&fit.model) {
        s.push_str(&format!("{n},{f},{m}\n"));
    }
    s
}

#[derive(Serialize)]
struct FitOutput<'a> {
    fit: &'a FitResult,
    bootstrap_sd: Option<&'a [f64]>,
}

fn cmd_fit(args: &CommonArgs) -> Result<Outcome> {
    let cfg: FitConfig = load_config(&args.config)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let mut manifest = RunManifest::start("fit", &args.config, Some(seed), args.threads, &args.out)?;
    let curve = read_curve_csv(&resolve(&args.config, &cfg.data)).context("reading fit data")?;
    cfg.fixed.validate()?;
    let kind = match cfg.which {
        FitWhich::Code => FitKind::Code,
        FitWhich::Error => FitKind::Error { aliasing: cfg.aliasing },
    };
    let (fit, sd) = if cfg.bootstrap > 0 {
        let (f, sd) = bootstrap_fit(&curve, kind, &cfg.fixed, cfg.bootstrap, seed)?;
        (f, Some(sd))
    } else {
        (fit_decay_model(&curve, kind, &cfg.fixed, &FitOptions::default())?, None)
    };
    manifest.output("fit_report.txt", &fit_report_text(&fit, kind, sd.as_deref(), &curve.counts, &curve.fidelities))?;
    manifest.output("fit.json", &json(&FitOutput { fit: &fit, bootstrap_sd: sd.as_deref() })?)?;
    manifest.finish()?;
    Ok(if fit.converged {
        Outcome::Ok
    } else {
        Outcome::Warning("fit did not converge within the iteration budget; best iterate written".into())
    })
}

fn initial_state(sys: &ControlSystem, code: &CodeSubspace, label: &str) -> Result<State> {
    if let Some(n) = label.strip_prefix("fock:") {
        let n: usize = n.parse().with_context(|| format!("bad Fock level in {label:?}"))?;
        if n >= sys.cfg.cavity_dim {
            bail!("Fock level {n} exceeds the truncation {}", sys.cfg.cavity_dim);
        }
        return Ok(sys.cfg.basis(n, 0));
    }
    Ok(cardinal_states(code)[cardinal_index(label)?].clone())
}

fn cmd_wigner(args: &CommonArgs) -> Result<Outcome> {
    let cfg: WignerConfig = load_config(&args.config)?;
    if !(cfg.radius > 0.0 && cfg.step > 0.0) {
        bail!("invalid configuration: `radius` and `step` must be positive");
    }
    let mut manifest = RunManifest::start("wigner", &args.config, args.seed, args.threads, &args.out)?;
    let sys = load_system(&args.config, &cfg.system, cfg.cavity_dim)?;
    let code = kitten_code(&sys.cfg)?;
    let mut psi = initial_state(&sys, &code, &cfg.state)?;
    if let Some(p) = &cfg.pulse {
        let pulse = load_pulse(&args.config, p)?;
        psi = PulsePropagator::new(&sys, &pulse)?.propagate(&psi).last().clone();
    }
    let rho = reduced_cavity(&pure_density(&psi), &sys.cfg);
    let pts = square_grid(cfg.radius, cfg.step);
    let w = wigner(&rho, &pts);
    let mut s = String::from("# re_alpha,im_alpha,W\n");
    for (a, v) in pts.iter().zip(&w) {
        s.push_str(&format!("{},{},{}\n", a.re, a.im, v));
    }
    manifest.output("wigner.csv", &s)?;
    manifest.finish()?;
    Ok(Outcome::Ok)
}
