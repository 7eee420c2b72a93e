//! Truncated Fock-space operators and Hamiltonians of the cavity–transmon system.
//!
//! Joint basis index is `n * qubit_dim + j` for cavity Fock level `n` and
//! transmon level `j`. Frequencies enter in MHz (linear) and times in ns;
//! [`rad_per_ns`] is the only place the two meet.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{EstError, Result};
use crate::linalg::{kron, CMat, C64, ONE, ZERO};

/// Angular frequency in rad/ns for a linear frequency in MHz.
pub fn rad_per_ns(f_mhz: f64) -> f64 {
    2.0 * PI * f_mhz * 1e-3
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HilbertConfig {
    pub cavity_dim: usize,
    pub qubit_dim: usize,
}

impl Default for HilbertConfig {
    fn default() -> Self {
        HilbertConfig { cavity_dim: 12, qubit_dim: 2 }
    }
}

impl HilbertConfig {
    pub fn new(cavity_dim: usize, qubit_dim: usize) -> Result<Self> {
        let cfg = HilbertConfig { cavity_dim, qubit_dim };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cavity_dim < 6 {
            return Err(EstError::InvalidConfig(format!(
                "cavity_dim must be at least 6, got {}",
                self.cavity_dim
            )));
        }
        if !(2..=3).contains(&self.qubit_dim) {
            return Err(EstError::InvalidConfig(format!(
                "qubit_dim must be 2 or 3, got {}",
                self.qubit_dim
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.cavity_dim * self.qubit_dim
    }

    pub fn index(&self, n: usize, j: usize) -> usize {
        n * self.qubit_dim + j
    }

    /// Basis vector `|n⟩⊗|j⟩`.
    pub fn basis(&self, n: usize, j: usize) -> crate::linalg::CVec {
        let mut v = crate::linalg::CVec::zeros(self.dim());
        v[self.index(n, j)] = ONE;
        v
    }
}

/// Device parameters. Frequencies in MHz, coherence times in µs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemParams {
    #[serde(rename = "chi_MHz")]
    pub chi: f64,
    #[serde(rename = "chi_prime_MHz")]
    pub chi_prime: f64,
    #[serde(rename = "kerr_MHz")]
    pub kerr_a: f64,
    #[serde(rename = "kerr_prime_MHz")]
    pub kerr_a_prime: f64,
    #[serde(rename = "anharm_MHz")]
    pub kerr_q: f64,
    #[serde(rename = "t1_cav_us")]
    pub t1_cavity: f64,
    #[serde(rename = "t2_cav_us")]
    pub t2_cavity: f64,
    #[serde(rename = "t1_qb_us")]
    pub t1_qubit: f64,
    #[serde(rename = "t2_qb_us")]
    pub t2_qubit: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            chi: -3.66,
            chi_prime: 0.039,
            kerr_a: -0.022,
            kerr_a_prime: 0.00059,
            kerr_q: -180.0,
            t1_cavity: 180.0,
            t2_cavity: 290.0,
            t1_qubit: 70.0,
            t2_qubit: 30.0,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.chi,
            self.chi_prime,
            self.kerr_a,
            self.kerr_a_prime,
            self.kerr_q,
            self.t1_cavity,
            self.t2_cavity,
            self.t1_qubit,
            self.t2_qubit,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(EstError::InvalidConfig("non-finite system parameter".into()));
        }
        for (name, t1, t2) in [
            ("cavity", self.t1_cavity, self.t2_cavity),
            ("qubit", self.t1_qubit, self.t2_qubit),
        ] {
            if t1 <= 0.0 || t2 <= 0.0 {
                return Err(EstError::InvalidConfig(format!("{name} coherence times must be positive")));
            }
        }
        Ok(())
    }

    /// Pure dephasing rates (cavity, qubit) in 1/µs.
    pub fn dephasing_rates(&self) -> (f64, f64) {
        (
            1.0 / self.t2_cavity - 0.5 / self.t1_cavity,
            1.0 / self.t2_qubit - 0.5 / self.t1_qubit,
        )
    }
}

/// Contents of a system-parameters file: device parameters plus truncation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    #[serde(flatten)]
    pub params: SystemParams,
    #[serde(default = "default_cavity_dim")]
    pub cavity_dim: usize,
    #[serde(default = "default_qubit_dim")]
    pub qubit_dim: usize,
}

fn default_cavity_dim() -> usize {
    12
}

fn default_qubit_dim() -> usize {
    2
}

impl Default for SystemFile {
    fn default() -> Self {
        SystemFile { params: SystemParams::default(), cavity_dim: 12, qubit_dim: 2 }
    }
}

impl SystemFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: SystemFile = serde_json::from_str(&text)?;
        file.params.validate()?;
        file.config()?;
        Ok(file)
    }

    pub fn config(&self) -> Result<HilbertConfig> {
        HilbertConfig::new(self.cavity_dim, self.qubit_dim)
    }
}

#[derive(Clone, Debug)]
pub struct OperatorSet {
    pub a: CMat,
    pub a_dag: CMat,
    pub n_cav: CMat,
    pub q: CMat,
    pub q_dag: CMat,
    pub n_qb: CMat,
    pub parity_cav: CMat,
    pub identity: CMat,
}

fn annihilation(d: usize) -> CMat {
    let mut m = CMat::zeros(d, d);
    for n in 1..d {
        m[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    m
}

pub fn fock_operators(cfg: &HilbertConfig) -> Result<OperatorSet> {
    cfg.validate()?;
    let (dc, dq) = (cfg.cavity_dim, cfg.qubit_dim);
    let ic = CMat::identity(dc, dc);
    let iq = CMat::identity(dq, dq);
    let a = kron(&annihilation(dc), &iq);
    let q = kron(&ic, &annihilation(dq));
    let a_dag = a.adjoint();
    let q_dag = q.adjoint();
    let n_cav = &a_dag * &a;
    let n_qb = &q_dag * &q;
    let mut parity = CMat::zeros(dc, dc);
    for n in 0..dc {
        parity[(n, n)] = if n % 2 == 0 { ONE } else { -ONE };
    }
    Ok(OperatorSet {
        a,
        a_dag,
        n_cav,
        q,
        q_dag,
        n_qb,
        parity_cav: kron(&parity, &iq),
        identity: CMat::identity(cfg.dim(), cfg.dim()),
    })
}

/// Static Hamiltonian in rad/ns, doubly rotating frame.
pub fn build_static_hamiltonian(params: &SystemParams, cfg: &HilbertConfig) -> Result<CMat> {
    let ops = fock_operators(cfg)?;
    let ad2a2 = &ops.a_dag * &ops.a_dag * &ops.a * &ops.a;
    let ad3a3 = &ops.a_dag * &ad2a2 * &ops.a;
    let qd2q2 = &ops.q_dag * &ops.q_dag * &ops.q * &ops.q;
    let s = |f: f64| C64::new(rad_per_ns(f), 0.0);
    let h = &ad2a2 * s(params.kerr_a / 2.0)
        + &ad3a3 * s(params.kerr_a_prime / 6.0)
        + &qd2q2 * s(params.kerr_q / 2.0)
        + &ops.n_cav * &ops.n_qb * s(params.chi)
        + &ops.n_qb * &ad2a2 * s(params.chi_prime / 2.0);
    Ok(h)
}

/// Drive generators `(a, q)`; the drive term for amplitudes `(ε, Ω)` in MHz is
/// `2π(ε a + Ω q + h.c.)`.
#[derive(Clone, Debug)]
pub struct DriveGenerators {
    pub cav: CMat,
    pub qb: CMat,
}

pub fn build_drive_generators(cfg: &HilbertConfig) -> Result<DriveGenerators> {
    let ops = fock_operators(cfg)?;
    Ok(DriveGenerators { cav: ops.a, qb: ops.q })
}

impl DriveGenerators {
    /// Drive Hamiltonian in rad/ns for amplitudes in MHz.
    pub fn hamiltonian(&self, eps: C64, omega: C64) -> CMat {
        let c = rad_per_ns(1.0);
        let mut h = &self.cav * (eps * c) + &self.qb * (omega * c);
        h += h.adjoint();
        h
    }
}

pub fn commutator(a: &CMat, b: &CMat) -> Result<CMat> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(EstError::DimensionMismatch { expected: a.nrows(), got: b.nrows() });
    }
    Ok(a * b - b * a)
}

#[derive(Clone, Debug)]
pub struct CollapseOperator {
    pub label: &'static str,
    /// Rate in 1/µs.
    pub rate_per_us: f64,
    /// `sqrt(rate)` times the jump operator, rate in 1/ns.
    pub op: CMat,
}

pub fn collapse_operators(params: &SystemParams, cfg: &HilbertConfig) -> Result<Vec<CollapseOperator>> {
    params.validate()?;
    let ops = fock_operators(cfg)?;
    let (gphi_c, gphi_q) = params.dephasing_rates();
    for g in [gphi_c, gphi_q] {
        if g < -1e-9 {
            return Err(EstError::InconsistentCoherence(g));
        }
    }
    let candidates = [
        ("cavity_loss", 1.0 / params.t1_cavity, &ops.a),
        ("qubit_decay", 1.0 / params.t1_qubit, &ops.q),
        ("cavity_dephasing", 2.0 * gphi_c, &ops.n_cav),
        ("qubit_dephasing", 2.0 * gphi_q, &ops.n_qb),
    ];
    Ok(candidates
        .into_iter()
        .filter(|(_, rate, _)| *rate > 0.0)
        .map(|(label, rate, op)| CollapseOperator {
            label,
            rate_per_us: rate,
            op: op * C64::new((rate * 1e-3).sqrt(), 0.0),
        })
        .collect())
}

/// The full time-independent model: static Hamiltonian, drive generators, and truncation.
#[derive(Clone, Debug)]
pub struct ControlSystem {
    pub cfg: HilbertConfig,
    pub params: SystemParams,
    pub h0: CMat,
    pub drives: DriveGenerators,
}

impl ControlSystem {
    pub fn new(params: SystemParams, cfg: HilbertConfig) -> Result<Self> {
        params.validate()?;
        Ok(ControlSystem {
            cfg,
            params,
            h0: build_static_hamiltonian(&params, &cfg)?,
            drives: build_drive_generators(&cfg)?,
        })
    }

    pub fn from_file(file: &SystemFile) -> Result<Self> {
        Self::new(file.params, file.config()?)
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim()
    }

    pub fn hamiltonian(&self, eps: C64, omega: C64) -> CMat {
        if eps == ZERO && omega == ZERO {
            return self.h0.clone();
        }
        &self.h0 + self.drives.hamiltonian(eps, omega)
    }

    pub fn collapse_operators(&self) -> Result<Vec<CollapseOperator>> {
        collapse_operators(&self.params, &self.cfg)
    }
}

/// Eigendecomposition of a step Hamiltonian `H = D V diag(λ) Vᵀ D†` with real
/// orthogonal `V` and diagonal unitary `D`.
///
/// With a diagonal static Hamiltonian the drive couplings can be made real by a
/// diagonal phase change `|n, j⟩ → e^{-i(n arg ε + j arg Ω)}|n, j⟩`, so only a real
/// symmetric problem has to be solved.
#[derive(Clone, Debug)]
pub struct StepEigen {
    pub values: Vec<f64>,
    pub vr: nalgebra::DMatrix<f64>,
    pub gauge: Vec<C64>,
}

impl StepEigen {
    pub fn vectors(&self) -> CMat {
        let d = self.vr.nrows();
        CMat::from_fn(d, d, |m, j| self.gauge[m] * self.vr[(m, j)])
    }

    pub fn to_hermitian(&self) -> crate::linalg::HermitianEigen {
        crate::linalg::HermitianEigen { values: self.values.clone(), vectors: self.vectors() }
    }
}

impl ControlSystem {
    pub fn h0_is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|j| (0..d).all(|i| i == j || self.h0[(i, j)] == ZERO))
    }

    /// Step eigendecomposition through the real gauge; requires a diagonal `h0`.
    pub fn step_eigen(&self, eps: C64, omega: C64) -> StepEigen {
        let cfg = self.cfg;
        let d = self.dim();
        let c = rad_per_ns(1.0);
        let (ae, be) = (eps.arg(), omega.arg());
        let (me, mo) = (eps.norm(), omega.norm());
        let mut hr = nalgebra::DMatrix::<f64>::zeros(d, d);
        for i in 0..d {
            hr[(i, i)] = self.h0[(i, i)].re;
        }
        for n in 1..cfg.cavity_dim {
            let v = c * me * (n as f64).sqrt();
            for j in 0..cfg.qubit_dim {
                let (x, y) = (cfg.index(n - 1, j), cfg.index(n, j));
                hr[(x, y)] = v;
                hr[(y, x)] = v;
            }
        }
        for j in 1..cfg.qubit_dim {
            let v = c * mo * (j as f64).sqrt();
            for n in 0..cfg.cavity_dim {
                let (x, y) = (cfg.index(n, j - 1), cfg.index(n, j));
                hr[(x, y)] = v;
                hr[(y, x)] = v;
            }
        }
        let eig = nalgebra::SymmetricEigen::new(hr);
        let mut gauge = vec![ZERO; d];
        for n in 0..cfg.cavity_dim {
            for j in 0..cfg.qubit_dim {
                gauge[cfg.index(n, j)] = C64::from_polar(1.0, -(n as f64 * ae + j as f64 * be));
            }
        }
        StepEigen { values: eig.eigenvalues.iter().copied().collect(), vr: eig.eigenvectors, gauge }
    }
}
