//! Piecewise-constant drive envelopes, hardware constraints, and the pulse file format.

use std::path::Path;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{EstError, Result};
use crate::io::write_atomic;
use crate::linalg::{C64, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PulseConstraints {
    pub ramp_ns: f64,
    #[serde(rename = "bandwidth_MHz")]
    pub bandwidth_mhz: f64,
    #[serde(rename = "max_amp_MHz")]
    pub max_amp_mhz: f64,
}

impl Default for PulseConstraints {
    fn default() -> Self {
        PulseConstraints { ramp_ns: 48.0, bandwidth_mhz: 50.0, max_amp_mhz: 4.0 }
    }
}

/// Drive samples in MHz; sample `k` holds on `[k dt, (k+1) dt)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseEnvelope {
    pub dt: f64,
    pub eps: Vec<C64>,
    pub omega: Vec<C64>,
    pub constraints: PulseConstraints,
}

impl PulseEnvelope {
    pub fn zeros(n: usize, dt: f64) -> Self {
        PulseEnvelope {
            dt,
            eps: vec![ZERO; n],
            omega: vec![ZERO; n],
            constraints: PulseConstraints::default(),
        }
    }

    pub fn new(dt: f64, eps: Vec<C64>, omega: Vec<C64>) -> Result<Self> {
        let p = PulseEnvelope { dt, eps, omega, constraints: PulseConstraints::default() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps.len() != self.omega.len() {
            return Err(EstError::DimensionMismatch { expected: self.eps.len(), got: self.omega.len() });
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(EstError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.eps.iter().chain(&self.omega).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(EstError::InvalidConfig("non-finite pulse sample".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.len() as f64
    }

    /// Step boundaries `0, dt, ..., N dt`.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.len()).map(|k| k as f64 * self.dt).collect()
    }

    pub fn max_amplitude(&self) -> f64 {
        self.eps.iter().chain(&self.omega).map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = &self.constraints;
        s.push_str(&format!(
            "# dt_ns={} ramp_ns={} bandwidth_MHz={} max_amp_MHz={}\n",
            self.dt, c.ramp_ns, c.bandwidth_mhz, c.max_amp_mhz
        ));
        s.push_str("# t_ns,re_eps_MHz,im_eps_MHz,re_omega_MHz,im_omega_MHz\n");
        for k in 0..self.len() {
            let (e, o) = (self.eps[k], self.omega[k]);
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                k as f64 * self.dt,
                e.re,
                e.im,
                o.re,
                o.im
            ));
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            EstError::Parse(m) => EstError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut constraints = PulseConstraints::default();
        let mut dt = None;
        let mut times = Vec::new();
        let mut eps = Vec::new();
        let mut omega = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for tok in rest.split_whitespace() {
                    if let Some((k, v)) = tok.split_once('=') {
                        let v: f64 = v
                            .parse()
                            .map_err(|_| EstError::Parse(format!("line {}: bad value for {k}", lineno + 1)))?;
                        match k {
                            "dt_ns" => dt = Some(v),
                            "ramp_ns" => constraints.ramp_ns = v,
                            "bandwidth_MHz" => constraints.bandwidth_mhz = v,
                            "max_amp_MHz" => constraints.max_amp_mhz = v,
                            _ => {}
                        }
                    }
                }
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| EstError::Parse(format!("line {}: expected numbers", lineno + 1)))?;
            if vals.len() != 5 {
                return Err(EstError::Parse(format!("line {}: expected 5 columns, got {}", lineno + 1, vals.len())));
            }
            times.push(vals[0]);
            eps.push(C64::new(vals[1], vals[2]));
            omega.push(C64::new(vals[3], vals[4]));
        }
        let dt = match dt {
            Some(dt) => dt,
            None if times.len() >= 2 => times[1] - times[0],
            None => 1.0,
        };
        let p = PulseEnvelope { dt, eps, omega, constraints };
        p.validate()?;
        Ok(p)
    }
}

/// Gaussian-edge window at sample midpoints `(k + 1/2) dt`; σ is a quarter of the ramp.
pub fn edge_window(n: usize, dt: f64, ramp_ns: f64) -> Vec<f64> {
    let total = n as f64 * dt;
    let sigma = ramp_ns / 4.0;
    (0..n)
        .map(|k| {
            let t = (k as f64 + 0.5) * dt;
            let d = if t < ramp_ns {
                ramp_ns - t
            } else if t > total - ramp_ns {
                t - (total - ramp_ns)
            } else {
                0.0
            };
            if ramp_ns > 0.0 {
                (-0.5 * (d / sigma).powi(2)).exp()
            } else {
                1.0
            }
        })
        .collect()
}

/// Applies the bandwidth limit, amplitude clip and edge window to a single channel.
#[derive(Clone, Debug)]
pub struct ConstraintMap {
    n: usize,
    dt: f64,
    mask: Vec<bool>,
    window: Vec<f64>,
    max_amp: f64,
}

impl ConstraintMap {
    pub fn new(n: usize, dt: f64, c: &PulseConstraints) -> Result<Self> {
        let duration = n as f64 * dt;
        if duration < 2.0 * c.ramp_ns {
            return Err(EstError::PulseTooShort { duration_ns: duration, ramp_ns: c.ramp_ns });
        }
        let mask = (0..n)
            .map(|k| {
                let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
                let f_mhz = kk / (n as f64 * dt) * 1e3;
                f_mhz.abs() <= c.bandwidth_mhz
            })
            .collect();
        Ok(ConstraintMap { n, dt, mask, window: edge_window(n, dt, c.ramp_ns), max_amp: c.max_amp_mhz })
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn filter(&self, x: &[C64]) -> Vec<C64> {
        let mut planner = FftPlanner::new();
        let mut buf = x.to_vec();
        planner.plan_fft_forward(self.n).process(&mut buf);
        for (z, &keep) in buf.iter_mut().zip(&self.mask) {
            if !keep {
                *z = ZERO;
            }
        }
        planner.plan_fft_inverse(self.n).process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter().map(|z| z * s).collect()
    }

    pub fn clip(&self, x: &[C64]) -> Vec<C64> {
        x.iter()
            .map(|&z| {
                let m = z.norm();
                if m > self.max_amp {
                    z * (self.max_amp / m)
                } else {
                    z
                }
            })
            .collect()
    }

    /// filter, then clip, then window.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let f = self.filter(x);
        self.clip(&f).iter().zip(&self.window).map(|(z, w)| z * w).collect()
    }

    /// Pulls a gradient with respect to the constrained samples back to the raw samples.
    /// Gradients are packed as `∂/∂Re + i ∂/∂Im`.
    pub fn pullback(&self, x: &[C64], grad: &[C64]) -> Vec<C64> {
        let f = self.filter(x);
        let g: Vec<C64> = grad
            .iter()
            .zip(&self.window)
            .zip(&f)
            .map(|((&g, &w), &z)| {
                let g = g * w;
                let m = z.norm();
                if m > self.max_amp {
                    // Jacobian of z -> m_max z/|z| is (m_max/|z|)(1 - u u^T), u = z/|z|.
                    let u = z / m;
                    let radial = g.re * u.re + g.im * u.im;
                    (g - u * radial) * (self.max_amp / m)
                } else {
                    g
                }
            })
            .collect();
        self.filter(&g)
    }
}

pub fn apply_constraints(pulse: &PulseEnvelope) -> Result<PulseEnvelope> {
    pulse.validate()?;
    let map = ConstraintMap::new(pulse.len(), pulse.dt, &pulse.constraints)?;
    Ok(PulseEnvelope {
        dt: pulse.dt,
        eps: map.apply(&pulse.eps),
        omega: map.apply(&pulse.omega),
        constraints: pulse.constraints,
    })
}
