use alloc::vec;
use alloc::vec::Vec;

/// Adaptive-moment step rule with the usual defaults
/// (`beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`).
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Parameter increment for moving along `direction` with rate `lr`.
    /// Pass the ascent direction to ascend and the negated gradient to
    /// descend.
    pub fn step(&mut self, direction: &[f64], lr: f64) -> Vec<f64> {
        assert_eq!(direction.len(), self.m.len(), "adam state length");
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        direction
            .iter()
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .map(|(&g, (m, v))| {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                lr * (*m / c1) / (libm::sqrt(*v / c2) + self.eps)
            })
            .collect()
    }

    pub fn steps(&self) -> u32 {
        self.t
    }
}
