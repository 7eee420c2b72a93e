use std::collections::BTreeMap;
use std::io::Write;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use est_core::codespace::{cardinal_states, kitten_code, State};
use est_core::dynamics::PulsePropagator;
use est_core::errormodel::fit::{bootstrap_fit, fit_decay_model, model_value, FitKind, FitOptions};
use est_core::errormodel::{error_fidelity_curve, error_fidelity_sum, parity_posterior, DecayModelParams, FidelityCurve};
use est_core::experiment::{gate_jump_sweep, lossy_gate_report, LossyGateReport};
use est_core::grape::optimizer::random_initial;
use est_core::grape::{gate_summary, x_gate, CostModel, CostWeights, GateSummary, Mode};
use est_core::hilbert::{
    build_static_hamiltonian, commutator, fock_operators, ControlSystem, HilbertConfig, SystemFile, SystemParams,
};
use est_core::linalg::C64;
use est_core::lindblad::{idle, pure_density};
use est_core::metrics::{metric_series, qec_violation};
use est_core::pulse::PulseEnvelope;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tempfile::TempDir;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn estctl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_estctl"))
        .args(args)
        .env_remove("ESTCTL_DEFAULT_PARAMS")
        .output()
        .expect("spawn estctl")
}

fn table(cavity_dim: usize) -> ControlSystem {
    let mut f = SystemFile::load(&repo().join("configs/device.json")).unwrap();
    f.cavity_dim = cavity_dim;
    ControlSystem::from_file(&f).unwrap()
}

fn operator_algebra() -> Verdict {
    let start = Instant::now();
    let cfg = HilbertConfig::default();
    let d = SystemParams::default();
    let p = SystemParams { chi: 0.0, kerr_a_prime: 0.0, kerr_q: 0.0, ..d };
    let h = build_static_hamiltonian(&p, &cfg).unwrap();
    let ops = fock_operators(&cfg).unwrap();
    let lhs = commutator(&h, &ops.a).unwrap();
    let coeff = &ops.identity * C64::new(p.kerr_a, 0.0) + &ops.n_qb * C64::new(p.chi_prime, 0.0);
    let rhs = (coeff * &ops.a_dag * &ops.a * &ops.a) * C64::new(-2.0 * PI * 1e-3, 0.0);
    let mut worst: f64 = 0.0;
    for n in 0..cfg.cavity_dim - 2 {
        for j in 0..cfg.qubit_dim {
            let r = cfg.index(n, j);
            for k in 0..cfg.dim() {
                worst = worst.max((lhs[(r, k)] - rhs[(r, k)]).norm());
            }
        }
    }
    let t = start.elapsed().as_secs_f64();
    verdict(worst < 1e-10 && t < 1.0, format!("max residual {worst:.2e}, {t:.3} s"))
}

fn static_code() -> Verdict {
    let sys = table(12);
    let code = kitten_code(&sys.cfg).unwrap();
    let ops = fock_operators(&sys.cfg).unwrap();
    let dq = qec_violation(&code, &[ops.a.clone(), ops.n_cav.clone()]);
    let zero = PulseEnvelope::zeros(1000, 1.0);
    let still = SystemParams { chi: 0.0, chi_prime: 0.0, kerr_a: 0.0, kerr_a_prime: 0.0, kerr_q: 0.0, ..sys.params };
    let quiet = ControlSystem::new(still, sys.cfg).unwrap();
    let worst = |sys: &ControlSystem, starts: &[State]| {
        let prop = PulsePropagator::new(sys, &zero).unwrap();
        let (mut dq, mut leak, mut mis): (f64, f64, f64) = (0.0, 0.0, 0.0);
        for psi0 in starts {
            let m = metric_series(&prop, &code, &ops.a, &ops.n_cav, psi0).unwrap();
            dq = m.delta_qec.iter().fold(dq, |a, v| a.max(v.abs()));
            leak = m.leakage.iter().fold(leak, |a, v| a.max(v.abs()));
            mis = m.traj_mismatch.iter().flatten().fold(mis, |a, v| a.max(v.abs()));
        }
        (dq, leak, mis)
    };
    let cardinals = cardinal_states(&code);
    let q = worst(&quiet, &cardinals);
    let d = worst(&sys, &cardinals[..1]);
    let pass = dq < 1e-10 && [q.0, q.1, q.2, d.0, d.1, d.2].iter().all(|v| *v < 1e-10);
    verdict(
        pass,
        format!(
            "static Δ_QEC {dq:.1e}; zero Hamiltonian, six starts: max Δ_QEC {:.1e}, leakage {:.1e}, mismatch {:.1e}; \
             device Hamiltonian, zero drive, |0_L⟩: max Δ_QEC {:.1e}, leakage {:.1e}, mismatch {:.1e}",
            q.0, q.1, q.2, d.0, d.1, d.2
        ),
    )
}

fn gradient_oracle() -> Verdict {
    let start = Instant::now();
    let sys = table(12);
    let code = kitten_code(&sys.cfg).unwrap();
    let target = x_gate(&code, &sys.cfg, Mode::Est).unwrap();
    let model = CostModel::new(&sys, &target, CostWeights::new(1.0, 0.7, 7.0)).unwrap();
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let (eps, omega) = random_initial(50, 2.0, false, 100 + seed);
        let pulse = PulseEnvelope::new(1.0, eps, omega).unwrap();
        let (_, g) = model.evaluate_with_gradient(&pulse).unwrap();
        let scale = g.eps.iter().chain(&g.omega).map(|z| z.re.abs().max(z.im.abs())).fold(0.0, f64::max);
        for k in 0..50 {
            for (chan, dir) in [(0, C64::new(1.0, 0.0)), (0, C64::new(0.0, 1.0)), (1, C64::new(1.0, 0.0)), (1, C64::new(0.0, 1.0))] {
                let eval = |s: f64| {
                    let mut p = pulse.clone();
                    let slot = if chan == 0 { &mut p.eps[k] } else { &mut p.omega[k] };
                    *slot += dir * s;
                    model.evaluate(&p).unwrap().total
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = if chan == 0 { g.eps[k] } else { g.omega[k] };
                let an = if dir.re == 1.0 { an.re } else { an.im };
                worst = worst.max((fd - an).abs() / an.abs().max(1e-3 * scale));
            }
        }
    }
    let t = start.elapsed().as_secs_f64();
    verdict(worst < 1e-4 && t < 120.0, format!("worst relative error {worst:.2e}, {t:.1} s"))
}

struct Synthesized {
    pulse: PulseEnvelope,
    wall_s: f64,
}

fn synthesize(name: &str, out: &Path) -> Synthesized {
    let cfg = repo().join(format!("configs/{name}_x.json"));
    let start = Instant::now();
    let o = estctl(&["optimize", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let wall_s = start.elapsed().as_secs_f64();
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    Synthesized { pulse: PulseEnvelope::load(&out.join("pulse.csv")).unwrap(), wall_s }
}

struct Evaluation {
    summary: GateSummary,
    delta_qec: f64,
    leakage: f64,
    mismatch: f64,
    jump_infidelity: f64,
}

fn evaluate(sys: &ControlSystem, pulse: &PulseEnvelope) -> Evaluation {
    let code = kitten_code(&sys.cfg).unwrap();
    let ops = fock_operators(&sys.cfg).unwrap();
    let target = x_gate(&code, &sys.cfg, Mode::Est).unwrap();
    let prop = PulsePropagator::new(sys, pulse).unwrap();
    let m = metric_series(&prop, &code, &ops.a, &ops.n_cav, &code.word0).unwrap();
    Evaluation {
        summary: gate_summary(sys, pulse, &target).unwrap(),
        delta_qec: m.mean_delta_qec(),
        leakage: m.mean_leakage(),
        mismatch: m.mean_mismatch(),
        jump_infidelity: gate_jump_sweep(sys, pulse, &target, 101).unwrap().mean,
    }
}

fn lossy(sys: &ControlSystem, pulse: &PulseEnvelope) -> LossyGateReport {
    let code = kitten_code(&sys.cfg).unwrap();
    let target = x_gate(&code, &sys.cfg, Mode::Est).unwrap();
    lossy_gate_report(sys, pulse, &target, &code, &sys.collapse_operators().unwrap()).unwrap()
}

fn jump_probability() -> Verdict {
    let sys = table(12);
    let loss: Vec<_> = sys.collapse_operators().unwrap().into_iter().filter(|c| c.label == "cavity_loss").collect();
    let code = kitten_code(&sys.cfg).unwrap();
    let rho = idle(&sys, &loss, 1000.0, &pure_density(&code.word0)).unwrap();
    let ops = fock_operators(&sys.cfg).unwrap();
    let even = (&ops.identity + &ops.parity_cav) * C64::new(0.5, 0.0);
    let p_odd = 1.0 - (&even * &rho).trace().re;
    let oracle = 2.0 * (1e-3 / sys.params.t1_cavity) * 1000.0;
    verdict((p_odd - oracle).abs() < 0.1 * oracle, format!("p_odd {p_odd:.5} vs n̄κt {oracle:.5}"))
}

fn decay_algebra() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let gc = rng.gen_range(0.0..0.3);
        let ge = match i % 10 {
            0 => gc,
            1 => gc + rng.gen_range(-1e-9..1e-9),
            _ => rng.gen_range(0.0..0.3),
        };
        let p = DecayModelParams {
            gamma_c: gc,
            gamma_e: ge,
            f_err_jump: rng.gen_range(0.0..1.0),
            d: rng.gen_range(0.1..1.0),
            ..DecayModelParams::default()
        };
        let n = rng.gen_range(1..=200);
        let (a, b) = (error_fidelity_curve(n, &p), error_fidelity_sum(n, &p));
        worst = worst.max((a - b).abs() / b.abs());
    }
    let (p, eps) = (0.1, 0.05);
    let (mut measured_odd, mut truly_odd) = (0u64, 0u64);
    for _ in 0..1_000_000 {
        let odd = rng.gen_bool(p);
        if odd != rng.gen_bool(eps) {
            measured_odd += 1;
            truly_odd += odd as u64;
        }
    }
    let est = truly_odd as f64 / measured_odd as f64;
    let (exact, _) = parity_posterior(p, eps).unwrap();
    let z = (est - exact).abs() / (exact * (1.0 - exact) / measured_odd as f64).sqrt();
    verdict(worst <= 1e-12 && z <= 3.0, format!("closed form vs sum {worst:.1e} relative, posterior {z:.2}σ"))
}

fn fit_round_trip() -> Verdict {
    let counts: Vec<u32> = (1..=40).map(|k| k * 3).collect();
    let truth = DecayModelParams { gamma_c: 0.013, gamma_e: 0.041, f_err_jump: 0.85, ..DecayModelParams::default() };
    let fixed = DecayModelParams { gamma_c: truth.gamma_c, ..DecayModelParams::default() };
    let synthetic = |kind| {
        let f = counts.iter().map(|&n| model_value(kind, n, &truth).unwrap()).collect();
        FidelityCurve::new(counts.clone(), f).unwrap()
    };
    let free = |kind, p: &DecayModelParams| match kind {
        FitKind::Code => vec![p.gamma_c],
        _ => vec![p.gamma_e, p.f_err_jump],
    };
    let kinds = [FitKind::Code, FitKind::Error { aliasing: None }];
    let mut worst_rel: f64 = 0.0;
    for kind in kinds {
        let start = if kind == FitKind::Code { DecayModelParams::default() } else { fixed };
        let r = fit_decay_model(&synthetic(kind), kind, &start, &FitOptions::default()).unwrap();
        for (e, w) in free(kind, &r.params).iter().zip(free(kind, &truth)) {
            worst_rel = worst_rel.max((e / w - 1.0).abs());
        }
    }
    let noise = Normal::new(0.0, 0.01).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst_z: f64 = 0.0;
    for kind in kinds {
        let clean = synthetic(kind);
        let noisy = clean.fidelities.iter().map(|f| (f + noise.sample(&mut rng)).clamp(0.0, 1.0)).collect();
        let curve = FidelityCurve::new(counts.clone(), noisy).unwrap();
        let (fit, sd) = bootstrap_fit(&curve, kind, &fixed, 200, 3).unwrap();
        for ((e, w), s) in free(kind, &fit.params).iter().zip(free(kind, &truth)).zip(&sd) {
            worst_z = worst_z.max((e - w).abs() / s);
        }
    }
    verdict(worst_rel < 1e-6 && worst_z <= 3.0, format!("noiseless {worst_rel:.1e} relative, noisy within {worst_z:.2} bootstrap sd"))
}

fn reproducibility() -> Verdict {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("short.json");
    let system = repo().join("configs/device.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"system": {:?}, "target": "X", "mode": "EST", "duration_ns": 200, "schedule": {{
                "stage1": {{"weights": {{"w_fid": 1, "w_et": 0.7, "w_vel": 7}}, "iterations": 20}},
                "stage2": {{"weights": {{"w_fid": 1, "w_et": 0.1, "w_vel": 0}}, "iterations": 10}}, "seed": 4}}}}"#,
            system.to_str().unwrap()
        ),
    )
    .unwrap();
    let runs = [dir.path().join("a"), dir.path().join("b")];
    for out in &runs {
        let o = estctl(&["optimize", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "1"]);
        if !matches!(o.status.code(), Some(0) | Some(2)) {
            return verdict(false, String::from_utf8_lossy(&o.stderr).into_owned());
        }
    }
    let mut compared = 0;
    for entry in std::fs::read_dir(&runs[0]).unwrap() {
        let name = entry.unwrap().file_name();
        if name == "manifest.json" {
            continue;
        }
        let a = std::fs::read(runs[0].join(&name)).unwrap();
        let b = std::fs::read(runs[1].join(&name)).unwrap_or_default();
        if a != b {
            return verdict(false, format!("{} differs", name.to_string_lossy()));
        }
        compared += 1;
    }
    verdict(compared == 3, format!("{compared} output files byte-identical across two --threads 1 runs"))
}

#[test]
fn acceptance() {
    let mut results: BTreeMap<u32, Verdict> = BTreeMap::new();
    results.insert(1, operator_algebra());
    results.insert(2, static_code());
    results.insert(3, gradient_oracle());

    let work = TempDir::new().unwrap();
    let sys12 = table(12);
    let sys15 = table(15);
    let mut pulses = BTreeMap::new();
    let mut walls = BTreeMap::new();
    for name in ["ord", "le", "est"] {
        let s = synthesize(name, &work.path().join(name));
        walls.insert(name, s.wall_s);
        pulses.insert(name, s.pulse);
    }
    let eval12: BTreeMap<_, _> = pulses.iter().map(|(k, p)| (*k, evaluate(&sys12, p))).collect();

    let ord = &eval12["ord"].summary;
    results.insert(
        4,
        verdict(
            ord.code_fidelity >= 0.99,
            format!("Ord code fidelity {:.5}, synthesis {:.0} s", ord.code_fidelity, walls["ord"]),
        ),
    );

    let est = &eval12["est"].summary;
    let et = est.et_fidelity_avg.unwrap_or(0.0);
    results.insert(
        5,
        verdict(
            et >= 0.75 && est.code_fidelity >= 0.98,
            format!("EsT ET fidelity {et:.4}, code fidelity {:.5}", est.code_fidelity),
        ),
    );

    let (e, l, o) = (&eval12["est"], &eval12["le"], &eval12["ord"]);
    let ordered = |f: fn(&Evaluation) -> f64| f(e) <= f(l) && f(l) <= f(o);
    let levels: Vec<_> = ["est", "le", "ord"].iter().map(|k| eval12[k].summary.max_active_level.unwrap_or(0)).collect();
    let cap = levels.iter().all(|&n| n <= 9);
    let ok6 = cap
        && ordered(|x| x.delta_qec)
        && ordered(|x| x.leakage)
        && ordered(|x| x.mismatch)
        && ordered(|x| x.jump_infidelity);
    results.insert(
        6,
        verdict(
            ok6,
            format!(
                "EsT/LE/Ord Δ_QEC {:.3}/{:.3}/{:.3}, leakage {:.3}/{:.3}/{:.3}, mismatch {:.3}/{:.3}/{:.3}, jump infidelity {:.3}/{:.3}/{:.3}, max levels {levels:?}",
                e.delta_qec, l.delta_qec, o.delta_qec, e.leakage, l.leakage, o.leakage, e.mismatch, l.mismatch,
                o.mismatch, e.jump_infidelity, l.jump_infidelity, o.jump_infidelity
            ),
        ),
    );

    let lossy_est = lossy(&sys12, &pulses["est"]);
    let lossy_ord = lossy(&sys12, &pulses["ord"]);
    let est_err = lossy_est.error_space.unwrap_or(0.0);
    let ord_err = lossy_ord.error_space.unwrap_or(1.0);
    results.insert(
        7,
        verdict(
            (lossy_est.net - 0.974).abs() <= 0.02
                && (lossy_est.code_space - 0.990).abs() <= 0.02
                && ord_err <= 0.45
                && est_err >= 0.90,
            format!(
                "EsT net {:.4}, code space {:.4}, error space {est_err:.4}; Ord error space {ord_err:.4}",
                lossy_est.net, lossy_est.code_space
            ),
        ),
    );

    results.insert(8, jump_probability());
    results.insert(9, decay_algebra());
    results.insert(10, fit_round_trip());

    let mut drift: Vec<(String, f64)> = Vec::new();
    let ord15 = gate_summary(&sys15, &pulses["ord"], &x_gate(&kitten_code(&sys15.cfg).unwrap(), &sys15.cfg, Mode::Est).unwrap()).unwrap();
    let est15 = gate_summary(&sys15, &pulses["est"], &x_gate(&kitten_code(&sys15.cfg).unwrap(), &sys15.cfg, Mode::Est).unwrap()).unwrap();
    drift.push(("Ord code".into(), ord15.code_fidelity - ord.code_fidelity));
    drift.push(("EsT code".into(), est15.code_fidelity - est.code_fidelity));
    drift.push(("EsT ET".into(), est15.et_fidelity_avg.unwrap_or(0.0) - et));
    let lossy_est15 = lossy(&sys15, &pulses["est"]);
    let lossy_ord15 = lossy(&sys15, &pulses["ord"]);
    drift.push(("EsT net".into(), lossy_est15.net - lossy_est.net));
    drift.push(("EsT code space".into(), lossy_est15.code_space - lossy_est.code_space));
    drift.push(("EsT error space".into(), lossy_est15.error_space.unwrap_or(0.0) - est_err));
    drift.push(("Ord error space".into(), lossy_ord15.error_space.unwrap_or(0.0) - ord_err));
    let worst = drift.iter().map(|(_, d)| d.abs()).fold(0.0, f64::max);
    let listing: Vec<String> = drift.iter().map(|(k, d)| format!("{k} {d:+.1e}")).collect();
    results.insert(11, verdict(worst < 5e-3, format!("cavity_dim 15 vs 12: {}", listing.join(", "))));

    results.insert(12, reproducibility());

    let mut err = std::io::stderr().lock();
    writeln!(err).unwrap();
    for (k, v) in &results {
        writeln!(err, "criterion {k:>2}: {} ({})", if v.pass { "PASS" } else { "FAIL" }, v.detail).unwrap();
    }
    let failed: Vec<_> = results.iter().filter(|(_, v)| !v.pass).map(|(k, _)| *k).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
