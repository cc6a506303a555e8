//! Feedback control of the balancing weight `lambda`.
//!
//! The constraint violation `delta_err = 1 - delta - p_s` is the tracking
//! error. The penalty method is a proportional law on it, the Lagrangian
//! method an integral law, PIL combines the two, and SPIL additionally
//! gates the integrator when the error is large (integral separation).

use alloc::format;

use crate::{Error, Result};

/// Branch boundaries in [`separation_gain`] absorb this much rounding in
/// the error, so that e.g. `1 - 0.1 - 0.85` lands on the `<= 0.05` branch.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Penalty,
    Lagrangian,
    Pil,
    Spil,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Penalty => "penalty",
            Mode::Lagrangian => "lagrangian",
            Mode::Pil => "pil",
            Mode::Spil => "spil",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "penalty" => Some(Mode::Penalty),
            "lagrangian" => Some(Mode::Lagrangian),
            "pil" => Some(Mode::Pil),
            "spil" => Some(Mode::Spil),
            _ => None,
        }
    }
}

/// Integral separation thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separation {
    pub beta: f64,
    pub eps1: f64,
    pub eps2: f64,
}

impl Separation {
    /// `(beta, eps1, eps2) = (0.3, 0.2, 0.05)`, car following.
    pub const CAR: Separation = Separation {
        beta: 0.3,
        eps1: 0.2,
        eps2: 0.05,
    };
    /// `(beta, eps1, eps2) = (0.7, 0.2, 0.1)`, robot navigation.
    pub const ROBOT: Separation = Separation {
        beta: 0.7,
        eps1: 0.2,
        eps2: 0.1,
    };

    pub fn new(beta: f64, eps1: f64, eps2: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::invalid("beta", format!("must lie in (0, 1), got {beta}")));
        }
        if !(eps2 > 0.0 && eps1 > eps2 && eps1.is_finite()) {
            return Err(Error::invalid(
                "eps1/eps2",
                format!("need eps1 > eps2 > 0, got eps1={eps1}, eps2={eps2}"),
            ));
        }
        Ok(Separation { beta, eps1, eps2 })
    }
}

/// Gain on the integrator input: 0 above `eps1`, `beta` on
/// `(eps2, eps1]`, 1 at or below `eps2` (including every negative error).
pub fn separation_gain(delta_err: f64, sep: &Separation) -> f64 {
    if delta_err > sep.eps1 + BOUNDARY_TOLERANCE {
        0.0
    } else if delta_err > sep.eps2 + BOUNDARY_TOLERANCE {
        sep.beta
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierConfig {
    mode: Mode,
    k_p: f64,
    k_i: f64,
    delta: f64,
    separation: Option<Separation>,
}

impl MultiplierConfig {
    /// Checks the per-mode gain constraints: penalty needs `k_p > 0,
    /// k_i = 0`; lagrangian `k_p = 0, k_i > 0`; spil needs a separation.
    pub fn new(
        mode: Mode,
        k_p: f64,
        k_i: f64,
        delta: f64,
        separation: Option<Separation>,
    ) -> Result<Self> {
        if !(k_p >= 0.0 && k_p.is_finite()) {
            return Err(Error::invalid("k_p", format!("must be >= 0, got {k_p}")));
        }
        if !(k_i >= 0.0 && k_i.is_finite()) {
            return Err(Error::invalid("k_i", format!("must be >= 0, got {k_i}")));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::invalid("delta", format!("must lie in (0, 1], got {delta}")));
        }
        match mode {
            Mode::Penalty if !(k_p > 0.0 && k_i == 0.0) => {
                return Err(Error::invalid("k_p/k_i", "penalty mode needs k_p > 0 and k_i = 0"));
            }
            Mode::Lagrangian if !(k_p == 0.0 && k_i > 0.0) => {
                return Err(Error::invalid("k_p/k_i", "lagrangian mode needs k_p = 0 and k_i > 0"));
            }
            Mode::Spil if separation.is_none() => {
                return Err(Error::invalid("separation", "spil mode needs beta, eps1, eps2"));
            }
            _ => {}
        }
        Ok(MultiplierConfig {
            mode,
            k_p,
            k_i,
            delta,
            separation,
        })
    }

    pub fn penalty(k_p: f64, delta: f64) -> Result<Self> {
        Self::new(Mode::Penalty, k_p, 0.0, delta, None)
    }

    pub fn lagrangian(k_i: f64, delta: f64) -> Result<Self> {
        Self::new(Mode::Lagrangian, 0.0, k_i, delta, None)
    }

    pub fn pil(k_p: f64, k_i: f64, delta: f64) -> Result<Self> {
        Self::new(Mode::Pil, k_p, k_i, delta, None)
    }

    pub fn spil(k_p: f64, k_i: f64, delta: f64, separation: Separation) -> Result<Self> {
        Self::new(Mode::Spil, k_p, k_i, delta, Some(separation))
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn k_p(&self) -> f64 {
        self.k_p
    }

    pub fn k_i(&self) -> f64 {
        self.k_i
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn separation(&self) -> Option<Separation> {
        self.separation
    }
}

/// Controller memory. Starts at all zeros.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MultiplierState {
    pub integral: f64,
    pub lambda: f64,
    pub delta_err: f64,
}

impl MultiplierState {
    pub fn with_integral(integral: f64) -> Self {
        MultiplierState {
            integral,
            ..Default::default()
        }
    }

    /// One controller step from the latest safe-probability estimate.
    pub fn update(&self, p_s: f64, cfg: &MultiplierConfig) -> Result<MultiplierState> {
        if !(0.0..=1.0).contains(&p_s) {
            return Err(Error::invalid("p_s", format!("must lie in [0, 1], got {p_s}")));
        }
        let err = 1.0 - cfg.delta - p_s;
        let (integral, lambda) = match cfg.mode {
            Mode::Penalty => (self.integral, cfg.k_p * err.max(0.0)),
            Mode::Lagrangian => {
                let i = (self.integral + cfg.k_i * err).max(0.0);
                (i, i)
            }
            Mode::Pil | Mode::Spil => {
                let gain = match (cfg.mode, cfg.separation) {
                    (Mode::Spil, Some(sep)) => separation_gain(err, &sep),
                    _ => 1.0,
                };
                let i = (self.integral + gain * err).max(0.0);
                (i, (cfg.k_p * err + cfg.k_i * i).max(0.0))
            }
        };
        Ok(MultiplierState {
            integral,
            lambda,
            delta_err: err,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    #[test]
    fn separation_branches() {
        let s = Separation::CAR;
        assert_eq!(separation_gain(0.5, &s), 0.0);
        assert_eq!(separation_gain(0.1, &s), 0.3);
        assert_eq!(separation_gain(0.05, &s), 1.0);
        assert_eq!(separation_gain(0.2, &s), 0.3);
        assert_eq!(separation_gain(-0.001, &s), 1.0);
        assert_eq!(separation_gain(1.0 - 0.1 - 0.85, &s), 1.0);
    }

    #[test]
    fn spil_hand_example() {
        let cfg = MultiplierConfig::spil(15.0, 0.6, 0.1, Separation::CAR).unwrap();
        let s = MultiplierState::default().update(0.85, &cfg).unwrap();
        assert!((s.delta_err - 0.05).abs() < 1e-12);
        assert!((s.integral - 0.05).abs() < 1e-12);
        assert!((s.lambda - 0.78).abs() < 1e-12);
    }

    #[test]
    fn penalty_clamps_at_zero() {
        let cfg = MultiplierConfig::penalty(12.0, 0.1).unwrap();
        let s = MultiplierState::default().update(0.95, &cfg).unwrap();
        assert!((s.delta_err + 0.05).abs() < 1e-12);
        assert_eq!(s.lambda, 0.0);
        assert_eq!(s.integral, 0.0);
    }

    #[test]
    fn spil_blocks_integrator_when_far_from_target() {
        let cfg = MultiplierConfig::spil(15.0, 0.6, 0.001, Separation::CAR).unwrap();
        let s = MultiplierState::default().update(0.0, &cfg).unwrap();
        assert!((s.delta_err - 0.999).abs() < 1e-12);
        assert_eq!(s.integral, 0.0);
        assert!((s.lambda - 15.0 * 0.999).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(MultiplierConfig::penalty(0.0, 0.1).is_err());
        assert!(MultiplierConfig::new(Mode::Penalty, 1.0, 0.5, 0.1, None).is_err());
        assert!(MultiplierConfig::new(Mode::Lagrangian, 1.0, 0.5, 0.1, None).is_err());
        assert!(MultiplierConfig::new(Mode::Spil, 1.0, 0.5, 0.1, None).is_err());
        assert!(MultiplierConfig::pil(1.0, 1.0, 0.0).is_err());
        assert!(MultiplierConfig::pil(-1.0, 1.0, 0.1).is_err());
        assert!(Separation::new(0.3, 0.05, 0.2).is_err());
        assert!(Separation::new(1.0, 0.2, 0.05).is_err());
    }

    #[test]
    fn rejects_probability_out_of_range() {
        let cfg = MultiplierConfig::pil(1.0, 1.0, 0.1).unwrap();
        assert!(MultiplierState::default().update(1.5, &cfg).is_err());
        assert!(MultiplierState::default().update(-0.1, &cfg).is_err());
    }

    #[test]
    fn anti_windup_recovery_rate() {
        for cfg in [
            MultiplierConfig::pil(15.0, 0.6, 0.001).unwrap(),
            MultiplierConfig::spil(15.0, 0.6, 0.001, Separation::CAR).unwrap(),
        ] {
            let mut s = MultiplierState::with_integral(0.0105);
            for _ in 0..10 {
                let next = s.update(1.0, &cfg).unwrap();
                assert!((s.integral - next.integral - 0.001).abs() < 1e-12);
                s = next;
            }
            let clamped = s.update(1.0, &cfg).unwrap();
            assert_eq!(clamped.integral, 0.0);
        }
    }

    #[test]
    fn steady_state_is_a_fixed_point() {
        let cfg = MultiplierConfig::spil(15.0, 0.6, 0.25, Separation::CAR).unwrap();
        let s0 = MultiplierState {
            integral: 2.0,
            lambda: 1.2,
            delta_err: 0.0,
        };
        let s1 = s0.update(0.75, &cfg).unwrap();
        assert_eq!(s1.delta_err, 0.0);
        assert_eq!(s1.integral, 2.0);
        assert_eq!(s1.lambda, 1.2);
        assert_eq!(s1.update(0.75, &cfg).unwrap(), s1);
    }

    fn run(cfg: &MultiplierConfig, s0: MultiplierState, ps: &[f64]) -> Vec<MultiplierState> {
        let mut s = s0;
        ps.iter()
            .map(|&p| {
                s = s.update(p, cfg).unwrap();
                s
            })
            .collect()
    }

    proptest! {
        #[test]
        fn outputs_stay_non_negative(ps in proptest::collection::vec(0.0f64..=1.0, 1..60),
                                     kp in 0.0f64..50.0, ki in 0.0f64..5.0, delta in 0.001f64..0.5) {
            for cfg in [
                MultiplierConfig::pil(kp, ki, delta).unwrap(),
                MultiplierConfig::spil(kp, ki, delta, Separation::CAR).unwrap(),
            ] {
                for s in run(&cfg, MultiplierState::default(), &ps) {
                    prop_assert!(s.integral >= 0.0 && s.lambda >= 0.0);
                }
            }
        }

        #[test]
        fn pil_reduces_to_penalty_and_lagrangian(ps in proptest::collection::vec(0.0f64..=1.0, 1..60),
                                                 kp in 0.01f64..50.0, ki in 0.01f64..5.0, delta in 0.001f64..0.5) {
            let pen = run(&MultiplierConfig::penalty(kp, delta).unwrap(), MultiplierState::default(), &ps);
            let pil_p = run(&MultiplierConfig::pil(kp, 0.0, delta).unwrap(), MultiplierState::default(), &ps);
            for (a, b) in pen.iter().zip(&pil_p) {
                prop_assert_eq!(a.lambda, b.lambda);
            }
            // Lagrangian accumulates k_i * err, PIL accumulates err and scales
            // by k_i: the lambdas agree with I_lag = k_i * I_pil.
            let lag = run(&MultiplierConfig::lagrangian(ki, delta).unwrap(), MultiplierState::default(), &ps);
            let pil_i = run(&MultiplierConfig::pil(0.0, ki, delta).unwrap(), MultiplierState::default(), &ps);
            for (a, b) in lag.iter().zip(&pil_i) {
                prop_assert!((a.lambda - b.lambda).abs() <= 1e-9 * (1.0 + a.lambda));
                prop_assert!((a.integral - ki * b.integral).abs() <= 1e-9 * (1.0 + a.integral));
            }
        }

        #[test]
        fn spil_integral_never_exceeds_pil(ps in proptest::collection::vec(0.0f64..=1.0, 1..80),
                                           i0 in 0.0f64..3.0, delta in 0.001f64..0.5) {
            let s0 = MultiplierState::with_integral(i0);
            let pil = run(&MultiplierConfig::pil(15.0, 0.6, delta).unwrap(), s0, &ps);
            let spil = run(&MultiplierConfig::spil(15.0, 0.6, delta, Separation::CAR).unwrap(), s0, &ps);
            for (p, s) in pil.iter().zip(&spil) {
                prop_assert!(s.integral <= p.integral + 1e-12);
            }
        }
    }
}
