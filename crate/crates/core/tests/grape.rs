use std::f64::consts::{FRAC_1_SQRT_2, PI};

use est_core::codespace::{cardinal_states, kitten_code, CARDINAL_ANGLES};
use est_core::dynamics::propagate;
use est_core::grape::cost::{cost_et, cost_fidelity, cost_velocity_variance, total_cost};
use est_core::grape::{
    aqec_target, decode_target, encode_target, error_decode_target, h_gate, optimizer::random_initial, t_gate,
    target_by_name, x_gate, CostModel, CostWeights, ExtraWeights, GateTarget, Mode,
};
use est_core::hilbert::{ControlSystem, HilbertConfig, SystemParams};
use est_core::linalg::{C64, ZERO};
use est_core::pulse::PulseEnvelope;

fn system() -> ControlSystem {
    ControlSystem::new(SystemParams::default(), HilbertConfig::default()).unwrap()
}

fn random_pulse(n: usize, seed: u64, amp: f64) -> PulseEnvelope {
    let (eps, omega) = random_initial(n, amp, false, seed);
    PulseEnvelope::new(1.0, eps, omega).unwrap()
}

fn fd_check(model: &CostModel, pulse: &PulseEnvelope, samples: &[usize]) -> f64 {
    let (_, g) = model.evaluate_with_gradient(pulse).unwrap();
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let scale = g
        .eps
        .iter()
        .chain(&g.omega)
        .map(|z| z.re.abs().max(z.im.abs()))
        .fold(0.0, f64::max);
    for &k in samples {
        for (chan, dir) in [(0, C64::new(1.0, 0.0)), (0, C64::new(0.0, 1.0)), (1, C64::new(1.0, 0.0)), (1, C64::new(0.0, 1.0))] {
            let eval = |s: f64| {
                let mut p = pulse.clone();
                if chan == 0 {
                    p.eps[k] += dir * s;
                } else {
                    p.omega[k] += dir * s;
                }
                model.evaluate(&p).unwrap().total
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let an = if chan == 0 { g.eps[k] } else { g.omega[k] };
            let an = if dir.re == 1.0 { an.re } else { an.im };
            let rel = (fd - an).abs() / an.abs().max(1e-3 * scale);
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn gradient_matches_finite_differences_all_terms() {
    let sys = system();
    let code = kitten_code(&sys.cfg).unwrap();
    let target = x_gate(&code, &sys.cfg, Mode::Est).unwrap();
    let model = CostModel::new(&sys, &target, CostWeights::new(1.0, 0.7, 7.0))
        .unwrap()
        .with_extra(ExtraWeights { w_photon: 0.3, w_leak: 0.5, w_high: 0.8, high_level: 3 })
        .unwrap();
    let pulse = random_pulse(50, 3, 2.0);
    let worst = fd_check(&model, &pulse, &[0, 7, 25, 49]);
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn qubit_only_target_has_zero_cavity_gradient() {
    let sys = system();
    let code = kitten_code(&sys.cfg).unwrap();
    let target = t_gate(&code, &sys.cfg, Mode::Ord).unwrap();
    let model = CostModel::new(&sys, &target, CostWeights::new(1.0, 0.0, 1.0)).unwrap();
    let (_, g) = model.evaluate_with_gradient(&random_pulse(50, 1, 1.0)).unwrap();
    assert!(g.eps.iter().all(|z| *z == C64::new(0.0, 0.0)));
}

#[test]
fn zero_weights_give_zero_gradient() {
    let sys = system();
    let code = kitten_code(&sys.cfg).unwrap();
    let target = x_gate(&code, &sys.cfg, Mode::Est).unwrap();
    let model = CostModel::new(&sys, &target, CostWeights::new(0.0, 0.0, 0.0)).unwrap();
    let (_, g) = model.evaluate_with_gradient(&random_pulse(50, 2, 1.0)).unwrap();
    assert!(g.eps.iter().chain(&g.omega).all(|z| z.norm() == 0.0));
}

fn quiet() -> ControlSystem {
    let p = SystemParams { chi: 0.0, chi_prime: 0.0, kerr_a: 0.0, kerr_a_prime: 0.0, kerr_q: 0.0, ..SystemParams::default() };
    ControlSystem::new(p, HilbertConfig::default()).unwrap()
}

/// Qubit X on the six qubit cardinals with the cavity in vacuum.
fn qubit_flip_target(sys: &ControlSystem) -> GateTarget {
    let cfg = sys.cfg;
    let q = |t: f64, p: f64| {
        cfg.basis(0, 0) * C64::new((t / 2.0).cos(), 0.0) + cfg.basis(0, 1) * C64::from_polar((t / 2.0).sin(), p)
    };
    let pairs = CARDINAL_ANGLES
        .iter()
        .map(|&(t, p)| {
            let s = q(t, p);
            let flipped = cfg.basis(0, 0) * s[cfg.index(0, 1)] + cfg.basis(0, 1) * s[cfg.index(0, 0)];
            (s, flipped)
        })
        .collect();
    GateTarget { name: "qubit_x".into(), mode: Mode::Ord, pairs, error_pairs: None, logical: None, qubit_only: true }
}

#[test]
fn c1_matches_independent_recomputation() {
    let sys = system();
    let code = kitten_code(&sys.cfg).unwrap();
    let target = x_gate(&code, &sys.cfg, Mode::Ord).unwrap();
    let model = CostModel::new(&sys, &target, CostWeights::new(1.0, 0.0, 0.0)).unwrap();
    let pulse = random_pulse(60, 9, 2.0);
    let c1 = cost_fidelity(&model, &pulse).unwrap();
    let mut f = 0.0;
    for (input, t) in &target.pairs {
        f += propagate(&sys, &pulse, input).unwrap().last().dotc(t).norm_sqr();
    }
    let oracle = 1.0 - f / 6.0;
    assert!(c1 > 0.0 && c1 < 1.0);
    assert!((c1 - oracle).abs() < 1e-12);
    assert!((total_cost(&model, &pulse).unwrap() - c1).abs() < 1e-15);
}

#[test]
fn c1_extremes() {
    let sys = quiet();
    let target = qubit_flip_target(&sys);
    let model = CostModel::new(&sys, &target, CostWeights::new(1.0, 0.0, 0.0)).unwrap();
    // 2π·1 MHz·T = π/2 realizes −iσx
    let n = 250;
    let pi_pulse = PulseEnvelope::new(1.0, vec![ZERO; n], vec![C64::new(1.0, 0.0); n]).unwrap();
    assert!(cost_fidelity(&model, &pi_pulse).unwrap() < 1e-12);
    let idle = PulseEnvelope::zeros(n, 1.0);
    // poles are swapped, equator overlaps keep |⟨±X|±X⟩|² = 1 and |⟨±Y|∓Y⟩|² = 0
    assert!((cost_fidelity(&model, &idle).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    let (_, g) = model.evaluate_with_gradient(&pi_pulse).unwrap();
    assert!(g.omega.iter().all(|z| z.norm() < 1e-8));
}

#[test]
fn et_cost_static_and_even_pairs() {
    let sys = quiet();
    let cfg = sys.cfg;
    let code = kitten_code(&cfg).unwrap();
    let one_e = cfg.basis(1, 0);
    let mut target = GateTarget {
        name: "id".into(),
        mode: Mode::Est,
        pairs: vec![(code.word1.clone(), code.word1.clone())],
        error_pairs: Some(vec![(one_e.clone(), one_e.clone())]),
        logical: None,
        qubit_only: false,
    };
    let pulse = PulseEnvelope::zeros(100, 1.0);
    let model = CostModel::new(&sys, &target, CostWeights::new(1.0, 1.0, 0.0)).unwrap();
    assert!(cost_et(&model, &pulse).unwrap().abs() < 1e-14);
    target.error_pairs = Some(vec![(cfg.basis(2, 0), cfg.basis(2, 0))]);
    let model = CostModel::new(&sys, &target, CostWeights::new(1.0, 1.0, 0.0)).unwrap();
    assert!((cost_et(&model, &pulse).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn velocity_variance_cases() {
    let sys = quiet();
    let target = qubit_flip_target(&sys);
    let model = CostModel::new(&sys, &target, CostWeights::new(0.0, 0.0, 1.0)).unwrap();
    let n = 200;
    assert!(cost_velocity_variance(&model, &PulseEnvelope::zeros(n, 1.0)).unwrap().abs() < 1e-15);
    let uniform = PulseEnvelope::new(1.0, vec![ZERO; n], vec![C64::new(0.5, 0.0); n]).unwrap();
    let v_uniform = cost_velocity_variance(&model, &uniform).unwrap();
    assert!(v_uniform.abs() < 1e-6);
    let half: Vec<C64> = (0..n).map(|k| if k < n / 2 { C64::new(1.0, 0.0) } else { ZERO }).collect();
    let first_half = PulseEnvelope::new(1.0, vec![ZERO; n], half).unwrap();
    assert!(cost_velocity_variance(&model, &first_half).unwrap() > v_uniform + 1e-6);
}

#[test]
fn total_cost_is_the_weighted_sum() {
    let sys = system();
    let code = kitten_code(&sys.cfg).unwrap();
    let target = x_gate(&code, &sys.cfg, Mode::Est).unwrap();
    let model = CostModel::new(&sys, &target, CostWeights::new(1.0, 0.7, 7.0)).unwrap();
    let pulse = random_pulse(50, 4, 1.5);
    let c = model.evaluate(&pulse).unwrap();
    assert!((c.total - (c.c1 + 0.7 * c.c2.unwrap() + 7.0 * c.c3)).abs() < 1e-14);
    assert!(CostWeights::new(-1.0, 0.0, 1.0).validate().is_err());
}

#[test]
fn ord_mode_drops_the_et_weight() {
    let sys = system();
    let code = kitten_code(&sys.cfg).unwrap();
    let target = x_gate(&code, &sys.cfg, Mode::Ord).unwrap();
    let model = CostModel::new(&sys, &target, CostWeights::new(1.0, 0.7, 0.0)).unwrap();
    let c = model.evaluate(&random_pulse(50, 5, 1.0)).unwrap();
    assert!((c.total - c.c1).abs() < 1e-15);
}

#[test]
fn logical_targets() {
    let cfg = HilbertConfig::default();
    let code = kitten_code(&cfg).unwrap();
    let x = x_gate(&code, &cfg, Mode::Est).unwrap();
    let plus_x = &x.pairs[2];
    assert!((plus_x.0.dotc(&plus_x.1).norm() - 1.0).abs() < 1e-14);
    assert!(x.error_pairs.as_ref().unwrap().len() == 6);
    let t = t_gate(&code, &cfg, Mode::Ord).unwrap();
    assert!(t.qubit_only);
    let one = &t.pairs[1];
    assert!((&one.1 - &code.word1 * C64::from_polar(1.0, PI / 4.0)).norm() < 1e-14);
    let h = h_gate(&code, &cfg, Mode::Ord).unwrap();
    let hm = h.logical.unwrap();
    assert!((hm * hm - nalgebra::Matrix2::identity()).norm() < 1e-14);
    let cards = cardinal_states(&code);
    for (i, (input, _)) in h.pairs.iter().enumerate() {
        assert!((input - &cards[i]).norm() < 1e-15);
    }
    assert!(target_by_name("Q", &code, &cfg, &est_core::linalg::CMat::zeros(cfg.dim(), cfg.dim()), Mode::Ord).is_err());
}

#[test]
fn le_and_est_need_error_maps() {
    let cfg = HilbertConfig::default();
    let code = kitten_code(&cfg).unwrap();
    let enc = encode_target(&code, &cfg).unwrap();
    assert!(enc.with_mode(Mode::Est).is_err());
}

#[test]
fn aqec_map() {
    let sys = system();
    let cfg = sys.cfg;
    let code = kitten_code(&cfg).unwrap();
    let t = aqec_target(&code, &cfg, &sys.h0, None).unwrap();
    assert_eq!(t.pairs.len(), 12);
    assert!((&t.pairs[0].0 - &code.word0).norm() < 1e-15 && (&t.pairs[0].1 - &code.word0).norm() < 1e-15);
    // |1_E⟩|g⟩ = |1,g⟩ → |2,e⟩
    let (e1, target) = &t.pairs[7];
    assert!((e1[cfg.index(1, 0)].norm() - 1.0).abs() < 1e-14);
    assert!((target[cfg.index(2, 1)].norm() - 1.0).abs() < 1e-14);
    for i in 0..12 {
        for j in 0..12 {
            let a = t.pairs[i].0.dotc(&t.pairs[j].0);
            let b = t.pairs[i].1.dotc(&t.pairs[j].1);
            assert!((a - b).norm() < 1e-12, "Gram mismatch at {i},{j}");
        }
    }
    let framed = aqec_target(&code, &cfg, &sys.h0, Some(1200.0)).unwrap();
    let idle = propagate(&sys, &PulseEnvelope::zeros(1200, 1.0), &framed.pairs[7].1).unwrap();
    assert!((idle.last() - target).norm() < 1e-9);
}

#[test]
fn encode_decode_targets() {
    let cfg = HilbertConfig::default();
    let code = kitten_code(&cfg).unwrap();
    let enc = encode_target(&code, &cfg).unwrap();
    let dec = decode_target(&code, &cfg).unwrap();
    for ((qi, lo), (li, qo)) in enc.pairs.iter().zip(&dec.pairs) {
        assert!((lo - li).norm() < 1e-15);
        assert!((qi - qo).norm() < 1e-15);
    }
    let plus = &enc.pairs[2];
    let expect = (cfg.basis(0, 0) + cfg.basis(0, 1)) * C64::new(FRAC_1_SQRT_2, 0.0);
    assert!((&plus.0 - expect).norm() < 1e-15);
    assert!((&plus.1 - &cardinal_states(&code)[2]).norm() < 1e-15);
    let ed = error_decode_target(&code, &cfg).unwrap();
    assert!((ed.pairs[0].0[cfg.index(3, 0)].norm() - 1.0).abs() < 1e-14);
    assert!((&ed.pairs[0].1 - cfg.basis(0, 0)).norm() < 1e-15);
}
