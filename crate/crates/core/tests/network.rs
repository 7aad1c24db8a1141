mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{fd_gradient, oracle_predict, oracle_steps, Real, DD};
use spikeflow::surrogate::{Checkpoint, Encoding, Normalisation, Surrogate, SurrogateConfig, Target};
use spikeflow::PiecewiseConstantControl;

struct Case {
    s: Surrogate,
    params: spikeflow::SurrogateParams,
    x: Vec<f64>,
    u: PiecewiseConstantControl,
    targets: Vec<(f64, Vec<f64>)>,
}

/// Random surrogate with non-trivial normalisation, random inputs and up to
/// `max_steps` recurrent steps per target.
fn case(seed: u64, hidden: usize, max_steps: usize) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (dx, du, dy) = (rng.gen_range(1..5), rng.gen_range(1..3), rng.gen_range(1..3));
    let delta = rng.gen_range(1.0..20.0);
    let cfg = SurrogateConfig::new(hidden, dx, du, dy, delta);
    let mut norm = Normalisation::identity(&cfg);
    for a in [&mut norm.state, &mut norm.input, &mut norm.output] {
        for (o, s) in a.offset.iter_mut().zip(&mut a.scale) {
            *o = rng.gen_range(-2.0..2.0);
            *s = rng.gen_range(0.5..3.0);
        }
    }
    let s = Surrogate::new(cfg, norm).unwrap();
    let params = s.init_params(seed);
    let x: Vec<f64> = (0..dx).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let values: Vec<Vec<f64>> = (0..max_steps + 2).map(|_| (0..du).map(|_| rng.gen_range(-1.0..2.0)).collect()).collect();
    let u = PiecewiseConstantControl::new(delta, values).unwrap();
    let targets = (0..rng.gen_range(1..4))
        .map(|_| {
            let t = rng.gen_range(0.0..max_steps as f64 * delta * 0.999);
            let y = (0..dy).map(|_| rng.gen_range(-3.0..3.0)).collect();
            (t, y)
        })
        .collect();
    Case { s, params, x, u, targets }
}

#[test]
fn double_double_elementary_functions() {
    for &v in &[-30.0, -3.2, -0.5, -1e-9, 0.0, 1e-7, 0.3, 1.0, 2.5, 17.0] {
        let e = DD::new(v).exp();
        assert!((e.to_f64() - v.exp()).abs() <= 2e-16 * v.exp());
        let t = DD::new(v).tanh();
        assert!((t.to_f64() - v.tanh()).abs() <= 1e-16 + 2e-16 * v.tanh().abs());
    }
    // exp(a) exp(-a) = 1 to double-double precision
    let a = DD::new(1.234_567);
    let one = a.exp() * (-a).exp() - DD::new(1.0);
    assert!(one.to_f64().abs() < 1e-29);
}

#[test]
fn step_schedule_matches_interval_count() {
    let u = PiecewiseConstantControl::new(10.0, vec![vec![0.0]; 8]).unwrap();
    assert_eq!(oracle_steps(0.0, &u), vec![(0.0, 0)]);
    assert_eq!(oracle_steps(25.0, &u), vec![(1.0, 0), (1.0, 1), (0.5, 2)]);
    let shifted = u.shift(4.0).unwrap();
    let st = oracle_steps(7.0, &shifted);
    assert_eq!(st.len(), 2);
    assert!((st[0].0 - 0.6).abs() < 1e-15 && (st[1].0 - 0.1).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forward_matches_reference_implementation(seed in any::<u64>(), shift in 0.0f64..25.0) {
        let c = case(seed, 5, 6);
        let u = c.u.shift(shift.min(c.u.delta() * 0.99)).unwrap();
        for (t, _) in &c.targets {
            let got = c.s.forward(&c.params, &c.x, &u, *t).unwrap().y;
            let want: Vec<f64> = oracle_predict(&c.s, &c.params.values, &c.x, &u, *t);
            for (a, b) in got.iter().zip(&want) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn gradient_matches_high_precision_differences(seed in any::<u64>()) {
        let c = case(seed, 3, 3);
        let targets: Vec<Target> = c.targets.iter().map(|(t, y)| Target { t: *t, y }).collect();
        let mut g = vec![0.0; c.params.values.len()];
        c.s.loss_and_grad(&c.params, &c.x, &c.u, &targets, 1.0, &mut g).unwrap();
        let fd = fd_gradient(&c.s, &c.params, &c.x, &c.u, &c.targets, 1e-9);
        for (i, (a, b)) in g.iter().zip(&fd).enumerate() {
            if a.abs().max(b.abs()) > 1e-8 {
                let rel = (a - b).abs() / a.abs().max(b.abs());
                prop_assert!(rel < 1e-5, "parameter {i}: backprop {a} vs differences {b}");
            }
        }
    }

    #[test]
    fn continuation_across_step_boundaries_is_exact(seed in any::<u64>(), split_frac in 0.0f64..1.0) {
        let c = case(seed, 6, 8);
        let t = c.targets[0].0;
        let steps = spikeflow::surrogate::schedule(t, &c.u);
        let k = ((steps.len() as f64) * split_frac) as usize;
        let s0 = c.s.encode(&c.params, &c.x).unwrap();
        let (whole, _) = c.s.run(&c.params, &s0, &steps, &c.u).unwrap();
        let (mid, _) = c.s.run(&c.params, &s0, &steps[..k], &c.u).unwrap();
        let (end, _) = c.s.run(&c.params, &mid, &steps[k..], &c.u).unwrap();
        prop_assert_eq!(common::bits(&whole.h), common::bits(&end.h));
        prop_assert_eq!(common::bits(&whole.c), common::bits(&end.c));
    }

    #[test]
    fn checkpoints_round_trip_bitwise(seed in any::<u64>(), raw in any::<bool>()) {
        let c = case(seed, 4, 2);
        let mut params = c.params.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in params.values.iter_mut().step_by(7) {
            *v = common::any_finite(&mut rng);
        }
        let ck = Checkpoint {
            config: c.s.config().clone(),
            normalisation: c.s.normalisation().clone(),
            seed,
            params,
        };
        let enc = if raw { Encoding::F64le } else { Encoding::Decimal };
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("model.ckpt");
        ck.write(&path, enc).unwrap();
        let back = Checkpoint::read(&path).unwrap();
        prop_assert_eq!(common::bits(&back.params.values), common::bits(&ck.params.values));
        prop_assert_eq!(&back.config, &ck.config);
        prop_assert_eq!(&back.normalisation, &ck.normalisation);
        prop_assert_eq!(back.to_bytes(enc).unwrap(), std::fs::read(&path).unwrap());
    }
}
