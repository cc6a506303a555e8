use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    /// Plain gradient steps scaled by the learning rate.
    Sgd,
    Adam,
}

impl Optimizer {
    pub fn name(self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam => "adam",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "sgd" => Some(Optimizer::Sgd),
            "adam" => Some(Optimizer::Adam),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    /// Trajectories per iteration.
    pub m: usize,
    /// Horizon shared by the constraint and the critic target.
    pub n: usize,
    pub gamma: f64,
    pub alpha_theta: f64,
    pub alpha_omega: f64,
    /// Stop once both parameter vectors move less than this (max norm).
    pub zeta: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Hidden layer widths of both networks.
    pub hidden: Vec<usize>,
    /// Trajectories per tape. Only affects memory and speed.
    pub chunk: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            m: 4096,
            n: 40,
            gamma: 0.99,
            alpha_theta: 3e-4,
            alpha_omega: 2e-4,
            zeta: 1e-6,
            max_iters: 1500,
            seed: 0,
            optimizer: Optimizer::Adam,
            hidden: vec![64, 64],
            chunk: 128,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::invalid("m", "must be at least 1"));
        }
        if self.n == 0 {
            return Err(Error::invalid("n", "must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid("gamma", format!("must lie in (0, 1), got {}", self.gamma)));
        }
        for (field, v) in [("alpha_theta", self.alpha_theta), ("alpha_omega", self.alpha_omega)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(field, format!("must be positive, got {v}")));
            }
        }
        if !(self.zeta >= 0.0) {
            return Err(Error::invalid("zeta", format!("must be >= 0, got {}", self.zeta)));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden", "layer widths must be positive"));
        }
        if self.chunk == 0 {
            return Err(Error::invalid("chunk", "must be at least 1"));
        }
        Ok(())
    }
}
