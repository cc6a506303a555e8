//! Joint safe-probability estimation and its smooth surrogate.
//!
//! Sign convention throughout: a safety value `h < 0` is safe, and the
//! surrogate is applied to the margin `z = -h` (positive means safe).

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{NodeId, Tape};
use crate::{Error, Result};

/// Smallest value a single surrogate factor is allowed to take.
pub const FACTOR_FLOOR: f64 = 1e-300;

/// Parameters of the indicator-like factor
/// `phi(z) = (1 + b1 tau) / (1 + b2 tau exp(-z / tau))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateConfig {
    tau: f64,
    b1: f64,
    b2: f64,
}

impl SurrogateConfig {
    /// Car-following setting: `tau = 1e-3, b1 = 1, b2 = 0.45`.
    pub const CAR: SurrogateConfig = SurrogateConfig {
        tau: 1e-3,
        b1: 1.0,
        b2: 0.45,
    };
    /// Robot navigation setting: `tau = 7e-2, b1 = 1, b2 = 0.45`.
    pub const ROBOT: SurrogateConfig = SurrogateConfig {
        tau: 7e-2,
        b1: 1.0,
        b2: 0.45,
    };

    /// Requires `0 < tau < 1`, `b1 > 0` and `0 < b2 < b1 / (1 + b1)`.
    pub fn new(tau: f64, b1: f64, b2: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::invalid("tau", format!("must lie in (0, 1), got {tau}")));
        }
        if !(b1 > 0.0 && b1.is_finite()) {
            return Err(Error::invalid("b1", format!("must be positive, got {b1}")));
        }
        if !(b2 > 0.0 && b2 < b1 / (1.0 + b1)) {
            return Err(Error::invalid(
                "b2",
                format!("must lie in (0, b1/(1+b1) = {}), got {b2}", b1 / (1.0 + b1)),
            ));
        }
        Ok(SurrogateConfig { tau, b1, b2 })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn b1(&self) -> f64 {
        self.b1
    }

    pub fn b2(&self) -> f64 {
        self.b2
    }

    /// Supremum of a single factor, `1 + b1 tau`.
    pub fn ceiling(&self) -> f64 {
        1.0 + self.b1 * self.tau
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-x.abs()))
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Value and derivative of the factor at margin `z`.
///
/// Written as `c * exp(-softplus(x))` with `x = ln(b2 tau) - z / tau`, so
/// that `exp(-z / tau)` is never formed and deeply unsafe margins give 0
/// instead of overflowing.
#[inline]
pub fn phi_and_grad(z: f64, cfg: &SurrogateConfig) -> (f64, f64) {
    let x = libm::log(cfg.b2 * cfg.tau) - z / cfg.tau;
    let value = cfg.ceiling() * libm::exp(-softplus(x));
    (value, value * logistic(x) / cfg.tau)
}

pub fn phi(z: f64, cfg: &SurrogateConfig) -> f64 {
    phi_and_grad(z, cfg).0
}

pub fn phi_grad(z: f64, cfg: &SurrogateConfig) -> f64 {
    phi_and_grad(z, cfg).1
}

/// Factor for a safety value `h` (margin `-h`), floored at
/// [`FACTOR_FLOOR`]. The derivative is with respect to `h` and is zero on
/// the floor.
#[inline]
pub fn factor_of_safety(h: f64, cfg: &SurrogateConfig) -> (f64, f64) {
    let (v, dz) = phi_and_grad(-h, cfg);
    if v < FACTOR_FLOOR {
        (FACTOR_FLOOR, 0.0)
    } else {
        (v, -dz)
    }
}

/// Product of factors over one trajectory's safety values.
pub fn surrogate_joint(row: &[f64], cfg: &SurrogateConfig) -> f64 {
    row.iter().map(|&h| factor_of_safety(h, cfg).0).product()
}

/// Log of [`surrogate_joint`], usable when the product itself would
/// underflow.
pub fn surrogate_joint_ln(row: &[f64], cfg: &SurrogateConfig) -> f64 {
    row.iter()
        .map(|&h| {
            let x = libm::log(cfg.b2 * cfg.tau) + h / cfg.tau;
            libm::log(cfg.ceiling()) - softplus(x)
        })
        .sum()
}

/// Tape version of the per-step factor applied to a column of safety
/// values.
pub fn factor_node(tape: &mut Tape<'_>, h: NodeId, cfg: &SurrogateConfig) -> NodeId {
    let cfg = *cfg;
    tape.map(h, move |v| factor_of_safety(v, &cfg))
}

/// Safety values `h(s_t)` for `m` trajectories and `t = 1..n`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyTrace {
    m: usize,
    n: usize,
    values: Vec<f64>,
}

impl SafetyTrace {
    pub fn new(m: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != m * n {
            return Err(Error::Dimension {
                what: "safety trace",
                expected: m * n,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState {
                trajectory: i / n.max(1),
                step: i % n.max(1) + 1,
            });
        }
        Ok(SafetyTrace { m, n, values })
    }

    pub fn trajectories(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n.max(1)).take(self.m)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of rows with `h < 0` at every step.
    pub fn safe_count(&self) -> usize {
        self.rows().filter(|r| is_safe(r)).count()
    }
}

/// Strict inequality: `h = 0` counts as unsafe.
pub fn is_safe(row: &[f64]) -> bool {
    row.iter().all(|&h| h < 0.0)
}

/// Monte-Carlo estimate `m / M` of the joint safe probability.
pub fn estimate_safe_prob(trace: &SafetyTrace) -> f64 {
    if trace.m == 0 {
        return 0.0;
    }
    trace.safe_count() as f64 / trace.m as f64
}

/// Batch mean of [`surrogate_joint`].
pub fn surrogate_mean(trace: &SafetyTrace, cfg: &SurrogateConfig) -> f64 {
    if trace.m == 0 {
        return 0.0;
    }
    trace.rows().map(|r| surrogate_joint(r, cfg)).sum::<f64>() / trace.m as f64
}
