use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use super::*;
use crate::{Error, SimRng};

fn random_net(sizes: &[usize], act: Activation, seed: u64) -> ParamVector {
    let topo = NetTopology::mlp(sizes[0], &sizes[1..sizes.len() - 1], sizes[sizes.len() - 1], act)
        .unwrap();
    let mut rng = SimRng::seed_from_u64(seed);
    let mut p = ParamVector::init(topo, &mut rng);
    // non-zero biases so every layer is exercised
    let vals: Vec<f64> = p.values().iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
    p = p.with_values(vals).unwrap();
    p
}

/// Central differences of `f` computed without any tape.
fn central_differences(p: &ParamVector, step: f64, f: impl Fn(&ParamVector) -> f64) -> Vec<f64> {
    let mut vals = p.values().to_vec();
    (0..vals.len())
        .map(|i| {
            let x = vals[i];
            vals[i] = x + step;
            let fp = f(&p.with_values(vals.clone()).unwrap());
            vals[i] = x - step;
            let fm = f(&p.with_values(vals.clone()).unwrap());
            vals[i] = x;
            (fp - fm) / (2.0 * step)
        })
        .collect()
}

#[test]
fn gradient_of_param_sum_is_all_ones() {
    let p = random_net(&[3, 4, 2], Activation::Relu, 1);
    let mut tape = Tape::new();
    let id = tape.register(&p);
    let x = tape.params(id);
    let root = tape.sum(x);
    let g = tape.gradient(root, id).unwrap();
    assert_eq!(g, vec![1.0; p.len()]);
}

#[test]
fn gradient_of_square_at_three_is_six() {
    let topo = NetTopology::new(vec![1, 1], vec![Activation::Identity], None).unwrap();
    // two parameters (w, b); pick b as "p"
    let p = ParamVector::new(topo, vec![0.0, 3.0]).unwrap();
    let mut tape = Tape::new();
    let id = tape.register(&p);
    let all = tape.params(id);
    let b = tape.column(all, 1);
    let sq = tape.square(b);
    let root = tape.sum(sq);
    assert_eq!(tape.scalar_value(root), 9.0);
    assert_eq!(tape.gradient(root, id).unwrap(), vec![0.0, 6.0]);
}

#[test]
fn root_gradient_wrt_itself_is_one() {
    let p = random_net(&[2, 1], Activation::Identity, 3);
    let mut tape = Tape::new();
    let id = tape.register(&p);
    let x = tape.params(id);
    let s = tape.sum(x);
    // d(1 * s)/ds through an affine node of slope 1
    let root = tape.affine(s, 1.0, 0.0);
    let g = tape.gradient(root, id).unwrap();
    let g2 = tape.gradient(s, id).unwrap();
    assert_eq!(g, g2);
}

#[test]
fn mlp_gradient_matches_central_differences() {
    let p = random_net(&[4, 8, 1], Activation::Relu, 11);
    let input = [0.3, -1.2, 0.7, 2.0];
    let mut tape = Tape::new();
    let id = tape.register(&p);
    let x = tape.constant(Mat::row_vector(&input));
    let y = tape.mlp(id, x).unwrap();
    let root = tape.sum(y);
    let analytic = tape.gradient(root, id).unwrap();
    let fd = central_differences(&p, 1e-5, |q| q.forward(&input).unwrap()[0]);
    for (i, (a, n)) in analytic.iter().zip(&fd).enumerate() {
        let rel = (a - n).abs() / n.abs().max(1.0);
        assert!(rel < 1e-6, "coord {i}: analytic {a} fd {n}");
    }
}

#[test]
fn tape_forward_is_bitwise_equal_to_plain_forward() {
    let topo = NetTopology::mlp(3, &[16, 16], 2, Activation::Relu)
        .unwrap()
        .with_squash(vec![(-4.0, 3.0), (-1.0, 1.0)])
        .unwrap();
    let p = ParamVector::init(topo, &mut SimRng::seed_from_u64(5));
    let batch = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, -0.5, 0.25, 9.0]);
    let plain = p.forward_batch(&batch).unwrap();
    let mut tape = Tape::new();
    let id = tape.register(&p);
    let x = tape.constant(batch);
    let y = tape.mlp(id, x).unwrap();
    assert_eq!(tape.value(y), &plain);
}

#[test]
fn quadratic_passes_finite_difference_check() {
    let topo = NetTopology::mlp(2, &[], 1, Activation::Identity).unwrap();
    let p = ParamVector::new(topo, vec![0.5, -1.5, 2.0]).unwrap();
    let f = |q: &ParamVector| -> (f64, Vec<f64>) {
        let mut tape = Tape::new();
        let id = tape.register(q);
        let x = tape.params(id);
        let sq = tape.square(x);
        let s = tape.sum(sq);
        let root = tape.scale(s, 0.5);
        (tape.scalar_value(root), tape.gradient(root, id).unwrap())
    };
    let (_, g) = f(&p);
    let report = finite_difference_check(|q| Probe::smooth(f(q).0), &p, &g, 1e-4);
    assert!(report.max_rel_error < 1e-8, "{report:?}");
    assert_eq!(report.checked, 3);
}

#[test]
fn non_finite_root_reports_first_bad_node() {
    let topo = NetTopology::mlp(1, &[], 1, Activation::Identity).unwrap();
    let p = ParamVector::new(topo, vec![1.0, 0.0]).unwrap();
    let mut tape = Tape::new();
    let id = tape.register(&p);
    let x = tape.params(id);
    let big = tape.affine(x, 1000.0, 0.0);
    let e = tape.exp(big); // node 2 overflows
    let root = tape.sum(e);
    match tape.gradient(root, id) {
        Err(Error::NonFiniteNode { node, op }) => {
            assert_eq!(node, e.index());
            assert_eq!(op, "map");
        }
        other => panic!("expected NonFiniteNode, got {other:?}"),
    }
}

#[test]
fn relu_subgradient_at_zero_is_zero() {
    let topo = NetTopology::new(vec![1, 1], vec![Activation::Relu], None).unwrap();
    // w = 1, b = 0, input 0 -> pre-activation exactly 0
    let p = ParamVector::new(topo, vec![1.0, 0.0]).unwrap();
    let mut tape = Tape::new();
    let id = tape.register(&p);
    let x = tape.constant(Mat::scalar(0.0));
    let y = tape.mlp(id, x).unwrap();
    let root = tape.sum(y);
    assert_eq!(tape.gradient(root, id).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn frozen_params_pass_gradient_to_inputs_only() {
    let actor = random_net(&[2, 4, 1], Activation::Tanh, 8);
    let critic = random_net(&[1, 4, 1], Activation::Tanh, 9);
    let mut tape = Tape::new();
    let a = tape.register(&actor);
    let c = tape.register_frozen(&critic);
    let x = tape.constant(Mat::row_vector(&[0.2, -0.4]));
    let h = tape.mlp(a, x).unwrap();
    let q = tape.mlp(c, h).unwrap();
    let root = tape.sum(q);
    let g = tape.backward(root).unwrap();
    assert!(g.wrt(c).is_empty());
    assert!(g.wrt(a).iter().any(|v| *v != 0.0));

    let fd = central_differences(&actor, 1e-6, |q| {
        let h = q.forward(&[0.2, -0.4]).unwrap();
        critic.forward(&h).unwrap()[0]
    });
    for (an, n) in g.wrt(a).iter().zip(&fd) {
        assert!((an - n).abs() < 1e-7);
    }
}

#[test]
fn squashed_outputs_never_touch_bounds() {
    let topo = NetTopology::mlp(3, &[8], 1, Activation::Relu)
        .unwrap()
        .with_squash(vec![(-4.0, 3.0)])
        .unwrap();
    let mut rng = SimRng::seed_from_u64(99);
    for _ in 0..10_000 {
        let scale = rng.random_range(0.0..50.0);
        let vals: Vec<f64> = (0..topo.param_count())
            .map(|_| rng.random_range(-scale..scale))
            .collect();
        let p = ParamVector::new(topo.clone(), vals).unwrap();
        let input: Vec<f64> = (0..3).map(|_| rng.random_range(-100.0..100.0)).collect();
        let y = p.forward(&input).unwrap()[0];
        assert!(y > -4.0 && y < 3.0, "output {y} hit a bound");
    }
}

#[test]
fn fd_check_skips_coordinates_that_cross_a_kink() {
    let topo = NetTopology::new(vec![1, 1], vec![Activation::Relu], None).unwrap();
    // pre-activation = w * 1 + b = 1e-9, within a step of the kink
    let p = ParamVector::new(topo, vec![1.0, -1.0 + 1e-9]).unwrap();
    let eval = |q: &ParamVector| {
        let mut tape = Tape::new();
        let id = tape.register(q);
        let x = tape.constant(Mat::scalar(1.0));
        let y = tape.mlp(id, x).unwrap();
        let root = tape.sum(y);
        (tape.scalar_value(root), tape.gradient(root, id).unwrap(), tape.kink_signature())
    };
    let (_, g, _) = eval(&p);
    let report = finite_difference_check(
        |q| {
            let (v, _, k) = eval(q);
            Probe { value: v, kink: k }
        },
        &p,
        &g,
        1e-5,
    );
    assert_eq!(report.skipped, 2);
    assert_eq!(report.checked, 0);
}

fn arb_net() -> impl Strategy<Value = (ParamVector, Vec<f64>)> {
    (1usize..4, 1usize..6, any::<u64>()).prop_flat_map(|(inp, hidden, seed)| {
        let p = random_net(&[inp, hidden, 2], Activation::Tanh, seed);
        (Just(p), proptest::collection::vec(-3.0f64..3.0, inp))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_is_linear_in_the_root((p, input) in arb_net(), ca in -2.0f64..2.0, cb in -2.0f64..2.0) {
        let mut tape = Tape::new();
        let id = tape.register(&p);
        let x = tape.constant(Mat::row_vector(&input));
        let y = tape.mlp(id, x).unwrap();
        let y0 = tape.column(y, 0);
        let y1 = tape.column(y, 1);
        let sq = tape.square(y1);
        let a = tape.sum(y0);
        let b = tape.sum(sq);
        let sa = tape.scale(a, ca);
        let sb = tape.scale(b, cb);
        let s = tape.add(sa, sb);
        let ga = tape.gradient(a, id).unwrap();
        let gb = tape.gradient(b, id).unwrap();
        let gs = tape.gradient(s, id).unwrap();
        for i in 0..gs.len() {
            let expect = ca * ga[i] + cb * gb[i];
            prop_assert!((gs[i] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
            prop_assert!(gs[i].is_finite());
        }
    }
}
