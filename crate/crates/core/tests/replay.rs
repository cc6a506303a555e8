//! Cross-module checks through the public API: the trainer's recorded
//! controller trace must be the multiplier fold over its own `p_s`
//! sequence, whatever the mode.

use proptest::prelude::*;
use spil_core::chance::SurrogateConfig;
use spil_core::envmodels::LinearToy;
use spil_core::multiplier::{MultiplierConfig, MultiplierState, Separation};
use spil_core::trainer::{train, Optimizer, TrainerConfig};

fn toy_config(seed: u64, iters: usize) -> TrainerConfig {
    TrainerConfig {
        m: 32,
        n: 10,
        gamma: 0.95,
        alpha_theta: 1e-2,
        alpha_omega: 1e-2,
        zeta: 0.0,
        max_iters: iters,
        seed,
        optimizer: Optimizer::Adam,
        hidden: vec![6],
        chunk: 16,
    }
}

fn modes() -> Vec<MultiplierConfig> {
    vec![
        MultiplierConfig::penalty(12.0, 0.1).unwrap(),
        MultiplierConfig::lagrangian(2.0, 0.1).unwrap(),
        MultiplierConfig::pil(5.0, 0.5, 0.1).unwrap(),
        MultiplierConfig::spil(5.0, 0.5, 0.1, Separation::ROBOT).unwrap(),
    ]
}

#[test]
fn recorded_controller_trace_is_a_replay_of_p_s() {
    let model = LinearToy::double_integrator();
    for mult in modes() {
        let out = train(&model, toy_config(3, 12), mult, SurrogateConfig::ROBOT).unwrap();
        assert_eq!(out.records.len(), 12);
        let mut s = MultiplierState::default();
        for r in &out.records {
            s = s.update(r.p_s, &mult).unwrap();
            assert_eq!(s.delta_err.to_bits(), r.delta_err.to_bits());
            assert_eq!(s.integral.to_bits(), r.integral.to_bits());
            assert_eq!(s.lambda.to_bits(), r.lambda.to_bits());
        }
    }
}

#[test]
fn modes_share_the_first_batch() {
    let model = LinearToy::double_integrator();
    let first: Vec<f64> = modes()
        .into_iter()
        .map(|m| train(&model, toy_config(5, 1), m, SurrogateConfig::ROBOT).unwrap().records[0].p_s)
        .collect();
    assert!(first.windows(2).all(|w| w[0] == w[1]), "{first:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn records_are_finite_and_p_s_is_a_fraction_of_m(seed in 0u64..1000) {
        let model = LinearToy::double_integrator();
        let mult = MultiplierConfig::spil(5.0, 0.5, 0.1, Separation::CAR).unwrap();
        let cfg = toy_config(seed, 3);
        let m = cfg.m as f64;
        let out = train(&model, cfg, mult, SurrogateConfig::ROBOT).unwrap();
        for r in &out.records {
            prop_assert!((r.p_s * m).fract() == 0.0);
            prop_assert!(r.integral >= 0.0 && r.lambda >= 0.0);
            for v in [r.j, r.objective, r.phi, r.grad_j_norm, r.grad_phi_norm, r.critic_loss] {
                prop_assert!(v.is_finite());
            }
        }
    }
}
