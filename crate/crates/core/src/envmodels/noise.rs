use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result, SimRng};

/// Rejection attempts before [`TruncatedNormal::sample`] gives up and
/// returns the interval-clamped mean.
const MAX_REJECTIONS: usize = 10_000;

/// Normal distribution conditioned on the open interval `(lower, upper)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub std: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TruncatedNormal {
    pub fn new(mean: f64, std: f64, lower: f64, upper: f64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite()) {
            return Err(Error::invalid("noise std", format!("must be positive, got {std}")));
        }
        if !(lower < upper) || !mean.is_finite() {
            return Err(Error::invalid(
                "noise bounds",
                format!("need lower < upper, got ({lower}, {upper})"),
            ));
        }
        Ok(TruncatedNormal {
            mean,
            std,
            lower,
            upper,
        })
    }

    /// Zero-mean, truncated symmetrically at `k` standard deviations.
    pub fn centred(std: f64, k: f64) -> Result<Self> {
        Self::new(0.0, std, -k * std, k * std)
    }

    /// Rejection sampling from the untruncated normal.
    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        for _ in 0..MAX_REJECTIONS {
            let z: f64 = rng.sample(StandardNormal);
            let x = self.mean + self.std * z;
            if x > self.lower && x < self.upper {
                return x;
            }
        }
        let mid = 0.5 * (self.lower + self.upper);
        if self.mean > self.lower && self.mean < self.upper {
            self.mean
        } else {
            mid
        }
    }
}

/// Independent truncated-normal channels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoiseSpec {
    channels: Vec<TruncatedNormal>,
}

impl NoiseSpec {
    pub fn new(channels: Vec<TruncatedNormal>) -> Self {
        NoiseSpec { channels }
    }

    pub fn channels(&self) -> &[TruncatedNormal] {
        &self.channels
    }

    pub fn dim(&self) -> usize {
        self.channels.len()
    }

    pub fn sample_into(&self, rng: &mut SimRng, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.channels) {
            *o = c.sample(rng);
        }
    }

    pub fn sample(&self, rng: &mut SimRng) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.dim()];
        self.sample_into(rng, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn car_noise_stays_in_bounds_and_is_centred() {
        let d = TruncatedNormal::new(0.0, 0.7, -7.0, 7.0).unwrap();
        let mut rng = SimRng::seed_from_u64(1);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let x = d.sample(&mut rng);
            assert!(x > -7.0 && x < 7.0);
            sum += x;
        }
        let mean = sum / n as f64;
        assert!(mean.abs() < 3.0 * 0.7 / libm::sqrt(n as f64), "mean {mean}");
    }

    #[test]
    fn tiny_std_concentrates_at_mean() {
        let d = TruncatedNormal::new(1.5, 0.001, -7.0, 7.0).unwrap();
        let mut rng = SimRng::seed_from_u64(2);
        for _ in 0..1000 {
            assert!((d.sample(&mut rng) - 1.5).abs() < 0.01);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(TruncatedNormal::new(0.0, 0.0, -1.0, 1.0).is_err());
        assert!(TruncatedNormal::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(TruncatedNormal::new(0.0, 1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn far_tail_interval_falls_back_inside() {
        let d = TruncatedNormal::new(0.0, 1.0, 40.0, 41.0).unwrap();
        let x = d.sample(&mut SimRng::seed_from_u64(3));
        assert!(x > 40.0 && x < 41.0);
    }
}
