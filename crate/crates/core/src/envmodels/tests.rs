use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use approx::assert_abs_diff_eq;
use core::f64::consts::PI;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use super::*;
use crate::autodiff::{Mat, Tape};
use crate::SimRng;

fn car(v_e: f64, v_f: f64, eps: f64) -> CarState {
    CarState::new(v_e, v_f, eps)
}

fn assert_car(got: CarState, want: [f64; 3]) {
    for (g, w) in got.to_array().iter().zip(want) {
        assert_abs_diff_eq!(*g, w, epsilon = 1e-12);
    }
}

#[test]
fn car_step_examples() {
    assert_car(step_car(car(10.0, 10.0, 20.0), 1.0, 0.0), [10.1, 10.0, 20.0]);
    assert_car(step_car(car(10.0, 8.0, 20.0), 0.0, 0.5), [10.0, 8.05, 19.8]);
    assert_car(step_car(car(7.5, 7.5, 12.0), 0.0, 0.0), [7.5, 7.5, 12.0]);
}

#[test]
fn car_reward_and_safety_examples() {
    assert_abs_diff_eq!(reward_car(car(10.0, 3.0, 20.0), 1.0), -0.02, epsilon = 1e-12);
    assert_eq!(reward_car(car(0.0, 0.0, 0.0), 0.0), 0.0);
    assert_abs_diff_eq!(reward_car(car(5.0, 1.0, 10.0), -2.0), -0.08, epsilon = 1e-12);
    assert_eq!(safety_car(car(0.0, 0.0, 20.0)), -18.0);
    assert_eq!(safety_car(car(0.0, 0.0, 2.0)), 0.0);
    assert_eq!(safety_car(car(0.0, 0.0, 1.5)), 0.5);
}

fn assert_robot(got: RobotState, want: [f64; 5]) {
    for (g, w) in got.to_array().iter().zip(want) {
        assert_abs_diff_eq!(*g, w, epsilon = 1e-12);
    }
}

#[test]
fn robot_step_examples() {
    let s = RobotState::new(0.0, 0.0, 0.0, 0.3, 0.0);
    assert_robot(step_robot(s, (0.3, 0.0), (0.0, 0.0)), [0.12, 0.0, 0.0, 0.3, 0.0]);
    let s = RobotState::new(0.0, 0.0, PI / 2.0, 0.5, 0.0);
    assert_robot(step_robot(s, (0.5, 0.0), (0.0, 0.0)), [0.0, 0.2, PI / 2.0, 0.5, 0.0]);
    let s = RobotState::new(1.0, -2.0, 0.4, 0.0, 0.0);
    assert_eq!(step_robot(s, (0.0, 0.0), (0.0, 0.0)), s);
}

#[test]
fn robot_clamp_examples() {
    assert_abs_diff_eq!(clamp_robot_action((0.3, 0.0), (1.5, 0.0)).0, 1.02, epsilon = 1e-12);
    assert_eq!(clamp_robot_action((0.3, 0.1), (0.5, 0.2)), (0.5, 0.2));
    assert_abs_diff_eq!(clamp_robot_action((0.0, 0.0), (0.0, -1.0)).1, -0.32, epsilon = 1e-12);
}

#[test]
fn robot_reward_and_safety_examples() {
    let s = RobotState::new(2.0, 0.5, 0.1, 0.3, 0.0);
    assert_abs_diff_eq!(reward_robot(s, (0.3, 0.0)), -0.378, epsilon = 1e-12);
    let s = RobotState::new(2.0, 0.0, 0.0, 0.3, 0.0);
    assert_eq!(reward_robot(s, (0.0, 0.0)), 0.0);
    let s = RobotState::new(2.0, 1.0, 0.0, 0.3, 0.0);
    assert_abs_diff_eq!(reward_robot(s, (0.0, 0.0)), -1.4, epsilon = 1e-12);

    let at = |x, y| RobotState::new(x, y, 0.0, 0.0, 0.0);
    assert_abs_diff_eq!(safety_robot(at(0.0, 0.0), at(2.0, 0.0)), -1.1, epsilon = 1e-12);
    assert_eq!(safety_robot(at(1.0, 1.0), at(1.0, 1.0)), 0.9);
    assert_eq!(safety_robot(at(0.0, 0.0), at(0.0, 0.9)), 0.0);
}

#[test]
fn car_initial_states_cover_the_stated_support() {
    let m = CarFollowing::new();
    let mut rng = SimRng::seed_from_u64(5);
    let n = 10_000;
    let mut s = [0.0; 3];
    let mut sum = 0.0;
    for _ in 0..n {
        m.sample_initial_state(&mut rng, &mut s);
        assert!((0.0..=15.0).contains(&s[0]) && (0.0..=15.0).contains(&s[1]));
        assert!((5.0..=35.0).contains(&s[2]));
        sum += s[2];
    }
    // U[5, 35] has sd 30 / sqrt(12)
    let sd = 30.0 / libm::sqrt(12.0);
    assert!((sum / n as f64 - 20.0).abs() < 3.0 * sd / libm::sqrt(n as f64));
}

#[test]
fn initial_states_are_deterministic_per_seed() {
    for id in [EnvId::Car, EnvId::Robot, EnvId::Toy] {
        let m = id.build();
        let d = m.spec().state_dim;
        let draw = |seed| {
            let mut out = vec![0.0; d];
            m.sample_initial_state(&mut SimRng::seed_from_u64(seed), &mut out);
            out
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }
}

#[test]
fn robot_initial_obstacle_is_clear_of_robot() {
    let m = RobotNavigation::new();
    let mut rng = SimRng::seed_from_u64(6);
    let mut s = [0.0; 10];
    for _ in 0..2000 {
        m.sample_initial_state(&mut rng, &mut s);
        assert!((s[0] - 1.0).abs() <= 0.1 && s[1].abs() <= 0.1);
        assert!(m.safety(&s) <= 0.9 - 1.2 + 1e-12);
    }
}

#[test]
fn env_ids_round_trip() {
    for id in [EnvId::Car, EnvId::Robot, EnvId::Toy] {
        assert_eq!(EnvId::from_name(id.name()), Some(id));
        assert_eq!(id.build().name(), id.name());
    }
    assert_eq!(EnvId::from_name("boat"), None);
}

fn models() -> Vec<Box<dyn Model + Send + Sync>> {
    vec![
        Box::new(CarFollowing::new()),
        Box::new(RobotNavigation::new()),
        Box::new(LinearToy::scalar()),
        Box::new(LinearToy::double_integrator()),
    ]
}

/// Random batch of states, in-range policy outputs and noise for `m`.
fn random_batch(m: &dyn Model, rows: usize, seed: u64) -> (Mat, Mat, Mat) {
    let spec = m.spec();
    let mut rng = SimRng::seed_from_u64(seed);
    let mut s = Mat::zeros(rows, spec.state_dim);
    let mut u = Mat::zeros(rows, spec.action_dim);
    let mut xi = Mat::zeros(rows, spec.noise.dim());
    for r in 0..rows {
        m.sample_initial_state(&mut rng, s.row_mut(r));
        for (c, &(lo, hi)) in spec.policy_bounds.iter().enumerate() {
            u.set(r, c, rng.random_range(lo..hi));
        }
        m.sample_noise(&mut rng, xi.row_mut(r));
    }
    (s, u, xi)
}

#[test]
fn tape_dynamics_agree_with_plain_functions() {
    for m in models() {
        let spec = m.spec().clone();
        let rows = 64;
        let (s, u, xi) = random_batch(m.as_ref(), rows, 21);
        let mut tape = Tape::new();
        let sn = tape.constant(s.clone());
        let un = tape.constant(u.clone());
        let xn = tape.constant(xi.clone());
        let on = m.observe_node(&mut tape, sn);
        let an = m.command_node(&mut tape, sn, un);
        let nn = m.step_node(&mut tape, sn, an, xn);
        let rn = m.reward_node(&mut tape, sn, an);
        let hn = m.safety_node(&mut tape, nn);

        let mut obs = vec![0.0; spec.obs_dim];
        let mut act = vec![0.0; spec.action_dim];
        let mut next = vec![0.0; spec.state_dim];
        for r in 0..rows {
            m.observe(s.row(r), &mut obs);
            m.command(s.row(r), u.row(r), &mut act);
            m.step(s.row(r), &act, xi.row(r), &mut next);
            let name = m.name();
            for (a, b) in obs.iter().zip(tape.value(on).row(r)) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
            for (a, b) in act.iter().zip(tape.value(an).row(r)) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
            for (a, b) in next.iter().zip(tape.value(nn).row(r)) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
            let rw = m.reward(s.row(r), &act);
            assert!((rw - tape.value(rn).get(r, 0)).abs() < 1e-10, "{name} reward row {r}");
            let h = m.safety(&next);
            assert!((h - tape.value(hn).get(r, 0)).abs() < 1e-12, "{name} safety row {r}");
        }
    }
}

#[test]
fn rollouts_stay_finite_with_in_bound_noise() {
    for m in models() {
        let spec = m.spec().clone();
        let mut rng = SimRng::seed_from_u64(33);
        let mut s = vec![0.0; spec.state_dim];
        let mut next = s.clone();
        let mut u = vec![0.0; spec.action_dim];
        let mut a = u.clone();
        let mut xi = vec![0.0; spec.noise.dim()];
        for _ in 0..100 {
            m.sample_initial_state(&mut rng, &mut s);
            for _ in 0..spec.horizon {
                for (c, &(lo, hi)) in spec.policy_bounds.iter().enumerate() {
                    u[c] = rng.random_range(lo..hi);
                }
                m.command(&s, &u, &mut a);
                m.sample_noise(&mut rng, &mut xi);
                m.step(&s, &a, &xi, &mut next);
                assert!(next.iter().all(|x| x.is_finite()));
                core::mem::swap(&mut s, &mut next);
            }
        }
    }
}

#[test]
fn robot_command_respects_rate_limits() {
    let m = RobotNavigation::new();
    let s = [0.0, 0.0, 0.0, 0.25, -0.1, 3.0, 0.0, 0.0, 0.0, 0.0];
    let mut a = [0.0; 2];
    for u in [(-1.0, -1.0), (1.0, 1.0), (0.3, -0.7)] {
        m.command(&s, &[u.0, u.1], &mut a);
        let c = clamp_robot_action((s[3], s[4]), (a[0], a[1]));
        assert_abs_diff_eq!(c.0, a[0], epsilon = 1e-15);
        assert_abs_diff_eq!(c.1, a[1], epsilon = 1e-15);
    }
}

#[test]
fn zero_noise_toy_never_draws_noise() {
    let m = LinearToy::double_integrator().without_noise();
    let mut rng = SimRng::seed_from_u64(1);
    let mut xi = [1.0];
    for _ in 0..10 {
        m.sample_noise(&mut rng, &mut xi);
        assert_eq!(xi, [0.0]);
    }
}

#[test]
fn scenarios_are_valid_and_commands_resolve() {
    let all = builtin_scenarios();
    assert_eq!(all.len(), 5);
    for s in &all {
        s.validate().unwrap();
    }
    let turn = &all[3];
    assert_eq!(turn.command_at(0), Some((0.3, 0.0)));
    assert_eq!(turn.command_at(5), Some((0.3, 0.0)));
    assert_eq!(turn.command_at(6), Some((0.4, -0.9)));
    assert_eq!(turn.command_at(100), Some((0.4, 0.0)));
}

#[test]
fn scenario_rejects_mismatched_policy() {
    use crate::autodiff::{Activation, NetTopology, ParamVector};
    let topo = NetTopology::mlp(3, &[4], 1, Activation::Relu).unwrap();
    let p = ParamVector::zeros(topo);
    let s = &builtin_scenarios()[0];
    assert!(run_scenario(&p, s, 4, &mut SimRng::seed_from_u64(0)).is_err());
}

#[test]
fn standing_policy_collides_in_blocking_scenario() {
    use crate::autodiff::{Activation, NetTopology, ParamVector};
    // u = 0 keeps the start speed; the obstacle drives into the robot
    let topo = NetTopology::mlp(9, &[4], 2, Activation::Relu)
        .unwrap()
        .with_squash(vec![(-1.0, 1.0); 2])
        .unwrap();
    let p = ParamVector::zeros(topo);
    let s = builtin_scenarios().remove(4);
    let rep = run_scenario(&p, &s, 50, &mut SimRng::seed_from_u64(4)).unwrap();
    assert_eq!(rep.episodes, 50);
    assert!(rep.safe_rate() < 0.5, "{rep:?}");
    assert!(rep.min_distance < 0.9);
}

proptest! {
    #[test]
    fn car_dynamics_are_affine(
        s1 in prop::array::uniform3(-30.0f64..30.0),
        s2 in prop::array::uniform3(-30.0f64..30.0),
        a in -4.0f64..3.0,
        xi in -7.0f64..7.0,
    ) {
        let sum = CarState::new(s1[0] + s2[0], s1[1] + s2[1], s1[2] + s2[2]);
        let lhs = step_car(sum, a, xi).to_array();
        let base2 = step_car(CarState::from_slice(&s2), 0.0, 0.0).to_array();
        let rhs = step_car(CarState::from_slice(&s1), a, xi).to_array();
        let zero = step_car(CarState::default(), 0.0, 0.0).to_array();
        for i in 0..3 {
            prop_assert!(((lhs[i] - base2[i]) - (rhs[i] - zero[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn heading_integrates_exactly(
        s in prop::array::uniform5(-5.0f64..5.0),
        cmd in prop::array::uniform2(-2.0f64..2.0),
        xi in prop::array::uniform2(-0.5f64..0.5),
    ) {
        let r = RobotState::from_slice(&s);
        let n = step_robot(r, (cmd[0], cmd[1]), (xi[0], xi[1]));
        prop_assert!(((n.alpha - r.alpha) - 0.4 * r.omega).abs() < 1e-12);
    }

    #[test]
    fn robot_safety_is_translation_invariant(
        a in prop::array::uniform2(-10.0f64..10.0),
        b in prop::array::uniform2(-10.0f64..10.0),
        shift in prop::array::uniform2(-10.0f64..10.0),
    ) {
        let at = |p: [f64; 2]| RobotState::new(p[0], p[1], 0.0, 0.0, 0.0);
        let h = safety_robot(at(a), at(b));
        let moved = safety_robot(
            at([a[0] + shift[0], a[1] + shift[1]]),
            at([b[0] + shift[0], b[1] + shift[1]]),
        );
        prop_assert!((h - moved).abs() < 1e-9);
    }

    #[test]
    fn clamp_is_an_idempotent_projection(
        cur in prop::array::uniform2(-2.0f64..2.0),
        req in prop::array::uniform2(-5.0f64..5.0),
    ) {
        let c = clamp_robot_action((cur[0], cur[1]), (req[0], req[1]));
        prop_assert_eq!(clamp_robot_action((cur[0], cur[1]), c), c);
        prop_assert!((c.0 - cur[0]).abs() <= 0.72 + 1e-12);
        prop_assert!((c.1 - cur[1]).abs() <= 0.32 + 1e-12);
    }
}
