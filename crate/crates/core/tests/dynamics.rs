mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{newton_equilibrium, rk4, textbook_fs_rhs};
use spikeflow::dataset::{sample_control, sample_initial_condition, InitialConditionSpec, InputSpec};
use spikeflow::spikes::SpikeDetector;
use spikeflow::*;

#[test]
fn fast_spiking_matches_textbook_equations() {
    let model = build_fast_spiking();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let x = [
            rng.gen_range(-100.0..60.0),
            rng.gen_range(0.0..1.0),
            rng.gen_range(0.0..1.0),
            rng.gen_range(0.0..1.0),
        ];
        let u = rng.gen_range(0.0..1.0);
        let got = model.vector_field(&x, &[u]).unwrap();
        let want = textbook_fs_rhs(&x, u);
        for i in 0..4 {
            // the library works per patch, the textbook per cm^2; only the
            // voltage equation carries the area, and it cancels
            let tol = 1e-9 * want[i].abs().max(1.0);
            assert!((got[i] - want[i]).abs() < tol, "component {i}: {} vs {}", got[i], want[i]);
        }
    }
}

#[test]
fn synapse_drives_second_neuron_from_first() {
    let pair = build_feedforward_pair();
    let uncoupled = pair.with_coupling(vec![vec![0.0; 2]; 2]).unwrap();
    let mut x = pair.resting_state(&[0.0, 0.0]).unwrap();
    let [v0, v1] = [pair.layout().voltage_indices()[0], pair.layout().voltage_indices()[1]];
    x[v0] = 20.0;
    x[v1] = -70.0;
    let a = pair.vector_field(&x, &[0.0, 0.0]).unwrap();
    let b = uncoupled.vector_field(&x, &[0.0, 0.0]).unwrap();
    assert_eq!(a[v0], b[v0]);
    // 0.1 S = 100 mS across 90 mV onto a 0.05 uF patch
    let expected = 100.0 * 90.0 / 0.05;
    assert!((a[v1] - b[v1] - expected).abs() < 1e-6 * expected);
}

#[test]
fn resting_state_matches_full_newton() {
    for model in [build_fast_spiking(), build_feedforward_pair()] {
        for amp in [0.0, 0.02] {
            let input = vec![amp; model.input_dim()];
            let rest = model.resting_state(&input).unwrap();
            let mut guess = rest.clone();
            for v in &mut guess {
                *v *= 1.01;
            }
            let newton = newton_equilibrium(&model, &guess, &input);
            for (a, b) in rest.iter().zip(&newton) {
                assert!((a - b).abs() < 1e-8 * b.abs().max(1.0), "{} {amp}: {a} vs {b}", model.name());
            }
        }
    }
}

fn max_voltage_error(model: &ConductanceModel, x0: &[f64], u: &PiecewiseConstantControl, t: f64) -> f64 {
    let oracle = rk4(model, x0, u, t, 1e-3);
    let stride = 1000;
    let times: Vec<f64> = oracle.times.iter().step_by(stride).copied().collect();
    let path = integrate(model, x0, u, t, &times, &IntegratorConfig::with_rtol(1e-9)).unwrap();
    let mut worst: f64 = 0.0;
    for (k, x) in path.states.iter().enumerate() {
        for &i in model.layout().voltage_indices() {
            worst = worst.max((x[i] - oracle.states[k * stride][i]).abs());
        }
    }
    worst
}

#[test]
fn bdf_tracks_rk4_through_input_switches() {
    let model = build_fast_spiking();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x0 = sample_initial_condition(&InitialConditionSpec::default(), model.layout(), &mut rng);
    let u = sample_control(&InputSpec::default(), 1, 10.0, 60.0, 2, &mut rng).unwrap();
    let err = max_voltage_error(&model, &x0, &u, 60.0);
    assert!(err < 0.05, "max voltage error {err} mV");
}

#[test]
fn bdf_tracks_rk4_on_coupled_pair() {
    let model = build_feedforward_pair();
    let x0 = model.resting_state(&[0.0, 0.0]).unwrap();
    let u = PiecewiseConstantControl::new(10.0, vec![vec![0.8, 0.0], vec![0.8, 0.0], vec![0.0, 0.0], vec![0.4, 0.0]]).unwrap();
    let err = max_voltage_error(&model, &x0, &u, 40.0);
    assert!(err < 0.05, "max voltage error {err} mV");
}

#[test]
fn steps_end_on_every_switch() {
    let model = build_fast_spiking();
    let u = PiecewiseConstantControl::new(10.0, (0..10).map(|k| vec![0.1 * k as f64]).collect()).unwrap();
    let x0 = model.resting_state(&[0.0]).unwrap();
    let cfg = IntegratorConfig {
        record_steps: true,
        ..IntegratorConfig::default()
    };
    let path = integrate(&model, &x0, &u, 100.0, &[100.0], &cfg).unwrap();
    let ends: Vec<f64> = path.stats.steps.iter().map(|s| s.1).collect();
    for k in 1..=10 {
        let s = 10.0 * k as f64;
        assert!(ends.contains(&s), "no step ends at {s}");
        assert!(path.stats.steps.iter().all(|&(a, b)| !(a < s && s < b)), "a step straddles {s}");
    }
}

#[test]
fn tonic_spiking_under_constant_drive() {
    let model = build_fast_spiking();
    let x0 = model.resting_state(&[0.0]).unwrap();
    let u = PiecewiseConstantControl::constant(10.0, vec![0.5]).unwrap();
    let times: Vec<f64> = (0..=4000).map(|k| k as f64 * 0.05).collect();
    let path = integrate(&model, &x0, &u, 200.0, &times, &IntegratorConfig::default()).unwrap();
    let v: Vec<f64> = path.states.iter().map(|x| x[0]).collect();
    let spikes = SpikeDetector::default().detect(&times, &v);
    assert!(spikes.len() >= 5, "{} spikes", spikes.len());
    let peak = v.iter().copied().fold(f64::MIN, f64::max);
    assert!(peak > 0.0 && peak < 60.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn gates_stay_in_unit_interval(seed in any::<u64>(), pair in any::<bool>()) {
        let model = if pair { build_feedforward_pair() } else { build_fast_spiking() };
        let cfg = if pair { GenerationConfig::feedforward_pair(seed) } else { GenerationConfig::fast_spiking(seed) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = sample_initial_condition(&cfg.initial, model.layout(), &mut rng);
        let u = sample_control(&cfg.input, model.input_dim(), 10.0, 100.0, 10, &mut rng).unwrap();
        let times: Vec<f64> = (0..=1000).map(|k| k as f64 * 0.1).collect();
        let path = integrate(&model, &x0, &u, 100.0, &times, &IntegratorConfig::default()).unwrap();
        for x in &path.states {
            for (i, v) in x.iter().enumerate() {
                if model.layout().is_gate(i) {
                    prop_assert!((-1e-6..=1.0 + 1e-6).contains(v), "gate {i} = {v}");
                }
            }
        }
    }

    #[test]
    fn sample_times_are_reproduced_exactly(seed in any::<u64>(), k in 1usize..50) {
        let model = build_fast_spiking();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut times: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..50.0)).collect();
        times.sort_by(f64::total_cmp);
        let x0 = model.resting_state(&[0.0]).unwrap();
        let u = PiecewiseConstantControl::constant(10.0, vec![0.3]).unwrap();
        let path = integrate(&model, &x0, &u, 50.0, &times, &IntegratorConfig::default()).unwrap();
        prop_assert_eq!(path.times, times);
    }
}
