use est_core::codespace::kitten_code;
use est_core::dynamics::propagate;
use est_core::hilbert::{fock_operators, CollapseOperator, ControlSystem, HilbertConfig, SystemParams};
use est_core::linalg::{hermiticity_residual, CMat, C64};
use est_core::lindblad::*;
use est_core::pulse::PulseEnvelope;

fn table() -> ControlSystem {
    ControlSystem::new(SystemParams::default(), HilbertConfig::default()).unwrap()
}

fn wiggle(n: usize) -> PulseEnvelope {
    let eps = (0..n).map(|k| C64::new(1.5 * (k as f64 * 0.05).sin(), 0.4)).collect();
    let omega = (0..n).map(|k| C64::new(0.8, -(k as f64 * 0.03).cos())).collect();
    PulseEnvelope::new(1.0, eps, omega).unwrap()
}

fn cavity_loss_only(sys: &ControlSystem) -> Vec<CollapseOperator> {
    sys.collapse_operators().unwrap().into_iter().filter(|c| c.label == "cavity_loss").collect()
}

#[test]
fn closed_limit_matches_schrodinger() {
    let sys = table();
    let pulse = wiggle(80);
    let psi = kitten_code(&sys.cfg).unwrap().word0;
    let rho = lindblad_propagate(&sys, &pulse, &[], &pure_density(&psi)).unwrap();
    let pure = propagate(&sys, &pulse, &psi).unwrap();
    let fid = (pure.last().adjoint() * rho.last() * pure.last())[(0, 0)].re;
    assert!((1.0 - fid).abs() < 1e-7);
}

#[test]
fn amplitude_damping_law() {
    let sys = table();
    let loss = cavity_loss_only(&sys);
    let t1_ns = sys.params.t1_cavity * 1e3;
    let psi = sys.cfg.basis(1, 0);
    let rho = idle(&sys, &loss, t1_ns, &pure_density(&psi)).unwrap();
    let ops = fock_operators(&sys.cfg).unwrap();
    let n = (&ops.n_cav * &rho).trace().re;
    assert!((n - (-1.0f64).exp()).abs() < 1e-6, "⟨n⟩ = {n}");
}

#[test]
fn idle_kitten_jump_probability() {
    let sys = table();
    let loss = cavity_loss_only(&sys);
    let code = kitten_code(&sys.cfg).unwrap();
    let rho = idle(&sys, &loss, 1000.0, &pure_density(&code.word0)).unwrap();
    let ops = fock_operators(&sys.cfg).unwrap();
    let even = (&ops.identity + &ops.parity_cav) * C64::new(0.5, 0.0);
    let p_odd = 1.0 - (&even * &rho).trace().re;
    let kappa = 1e-3 / sys.params.t1_cavity;
    let oracle = 2.0 * kappa * 1000.0;
    assert!((oracle - 0.0111).abs() < 1e-4);
    assert!((p_odd - oracle).abs() < 0.1 * oracle, "p_odd = {p_odd}");
}

#[test]
fn trace_and_hermiticity_are_conserved() {
    let sys = table();
    let collapse = sys.collapse_operators().unwrap();
    let psi = kitten_code(&sys.cfg).unwrap().word1;
    let traj = lindblad_propagate(&sys, &wiggle(200), &collapse, &pure_density(&psi)).unwrap();
    for rho in &traj.states {
        assert!((rho.trace().re - 1.0).abs() < 1e-7);
        assert!(hermiticity_residual(rho) < 1e-9);
    }
}

#[test]
fn halving_the_substep() {
    let sys = table();
    let collapse = sys.collapse_operators().unwrap();
    let pulse = wiggle(100);
    let rho0 = pure_density(&kitten_code(&sys.cfg).unwrap().word0);
    let auto = LindbladPropagator::new(&sys, &pulse, &collapse, LindbladOptions::default()).unwrap().evolve(&rho0).unwrap();
    let fine = LindbladPropagator::new(&sys, &pulse, &collapse, LindbladOptions { substeps: Some(64), tol: 1e-16 })
        .unwrap()
        .evolve(&rho0)
        .unwrap();
    let finer = LindbladPropagator::new(&sys, &pulse, &collapse, LindbladOptions { substeps: Some(128), tol: 1e-16 })
        .unwrap()
        .evolve(&rho0)
        .unwrap();
    assert!((&fine - &finer).norm() < 1e-7);
    assert!((&auto - &finer).norm() < 1e-7);
}

#[test]
fn vanishing_rates_converge_to_closed() {
    let p = SystemParams { t1_cavity: 1e9, t2_cavity: 2e9, t1_qubit: 1e9, t2_qubit: 2e9, ..SystemParams::default() };
    let sys = ControlSystem::new(p, HilbertConfig::default()).unwrap();
    let collapse = sys.collapse_operators().unwrap();
    let pulse = wiggle(100);
    let psi = kitten_code(&sys.cfg).unwrap().word0;
    let rho = lindblad_propagate(&sys, &pulse, &collapse, &pure_density(&psi)).unwrap();
    let pure = propagate(&sys, &pulse, &psi).unwrap();
    let fid = (pure.last().adjoint() * rho.last() * pure.last())[(0, 0)].re;
    assert!((1.0 - fid).abs() < 1e-6);
}

#[test]
fn rejects_unphysical_input() {
    let sys = table();
    let d = sys.dim();
    let pulse = PulseEnvelope::zeros(2, 1.0);
    let prop = LindbladPropagator::new(&sys, &pulse, &[], LindbladOptions::default()).unwrap();
    assert!(prop.evolve(&(CMat::identity(d, d) * C64::new(2.0, 0.0))).is_err());
    let mut neg = CMat::zeros(d, d);
    neg[(0, 0)] = C64::new(1.5, 0.0);
    neg[(1, 1)] = C64::new(-0.5, 0.0);
    assert!(prop.evolve(&neg).is_err());
    let mut nh = pure_density(&sys.cfg.basis(0, 0));
    nh[(0, 1)] = C64::new(0.1, 0.0);
    assert!(prop.evolve(&nh).is_err());
}

#[test]
fn single_jump_sector_matches_jump_average() {
    // qubit-only drive conserves parity, so the odd block is the one-jump sector
    let sys = table();
    let loss = cavity_loss_only(&sys);
    let n = 300;
    let omega = (0..n).map(|k| C64::new(1.2 * (k as f64 * 0.02).sin(), 0.5)).collect();
    let pulse = PulseEnvelope::new(1.0, vec![C64::new(0.0, 0.0); n], omega).unwrap();
    let cfg = sys.cfg;
    let psi = kitten_code(&cfg).unwrap().word0;
    let rho = lindblad_propagate(&sys, &pulse, &loss, &pure_density(&psi)).unwrap();
    let ops = fock_operators(&cfg).unwrap();
    let traj = propagate(&sys, &pulse, &psi).unwrap();
    let kappa = loss[0].rate_per_us * 1e-3;
    let mut p_jump = 0.0;
    for k in 0..pulse.len() {
        let s = (&traj.states[k] + &traj.states[k + 1]) * C64::new(0.5, 0.0);
        p_jump += kappa * (&ops.a * s).norm_squared() * pulse.dt;
    }
    let odd = (&ops.identity - &ops.parity_cav) * C64::new(0.5, 0.0);
    let p_odd = (&odd * rho.last()).trace().re;
    assert!((p_odd - p_jump).abs() < 0.1 * p_jump, "{p_odd} vs {p_jump}");
}
