use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::controls::PiecewiseConstantControl;
use crate::error::{Error, Result};
use crate::neuron::StateLayout;

/// Uniform box for initial conditions: one range for every membrane voltage
/// and one for every gate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditionSpec {
    /// mV
    pub voltage: [f64; 2],
    pub gate: [f64; 2],
}

impl Default for InitialConditionSpec {
    fn default() -> Self {
        Self {
            voltage: [-100.0, 100.0],
            gate: [0.0, 1.0],
        }
    }
}

/// Input amplitudes drawn i.i.d. uniformly per hold block; listed channels
/// stay at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    /// uA
    pub amplitude: [f64; 2],
    #[serde(default)]
    pub zeroed_channels: Vec<usize>,
}

impl Default for InputSpec {
    fn default() -> Self {
        Self {
            amplitude: [0.0, 1.0],
            zeroed_channels: Vec::new(),
        }
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if r[0] <= r[1] && r[0].is_finite() && r[1].is_finite() {
        Ok(())
    } else {
        Err(Error::contract(format!("invalid {name} range {r:?}")))
    }
}

fn uniform<R: Rng + ?Sized>(range: [f64; 2], rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    range[0] + u * (range[1] - range[0])
}

impl InitialConditionSpec {
    pub fn validate(&self) -> Result<()> {
        check_range("voltage", self.voltage)?;
        check_range("gate", self.gate)
    }
}

impl InputSpec {
    pub fn validate(&self) -> Result<()> {
        check_range("amplitude", self.amplitude)
    }
}

pub fn sample_initial_condition<R: Rng + ?Sized>(
    spec: &InitialConditionSpec,
    layout: &StateLayout,
    rng: &mut R,
) -> Vec<f64> {
    (0..layout.len())
        .map(|i| {
            let range = if layout.is_gate(i) {
                spec.gate
            } else {
                spec.voltage
            };
            uniform(range, rng)
        })
        .collect()
}

/// Piecewise-constant input covering `[0, horizon]` whose value is redrawn
/// every `hold_periods` periods of length `delta`.
pub fn sample_control<R: Rng + ?Sized>(
    spec: &InputSpec,
    input_dim: usize,
    delta: f64,
    horizon: f64,
    hold_periods: usize,
    rng: &mut R,
) -> Result<PiecewiseConstantControl> {
    if hold_periods == 0 {
        return Err(Error::contract("hold_periods must be at least 1"));
    }
    if let Some(&c) = spec.zeroed_channels.iter().find(|&&c| c >= input_dim) {
        return Err(Error::contract(format!("zeroed channel {c} out of range")));
    }
    let n_values = ((horizon / delta).ceil() as usize).max(1);
    let mut values = Vec::with_capacity(n_values);
    let mut current = vec![0.0; input_dim];
    for k in 0..n_values {
        if k % hold_periods == 0 {
            for (c, v) in current.iter_mut().enumerate() {
                *v = if spec.zeroed_channels.contains(&c) {
                    0.0
                } else {
                    uniform(spec.amplitude, rng)
                };
            }
        }
        values.push(current.clone());
    }
    PiecewiseConstantControl::new(delta, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuron::{build_fast_spiking, build_feedforward_pair};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn initial_conditions_respect_ranges() {
        let model = build_fast_spiking();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = sample_initial_condition(&InitialConditionSpec::default(), model.layout(), &mut rng);
            assert!((-100.0..=100.0).contains(&x[0]));
            assert!(x[1..].iter().all(|g| (0.0..=1.0).contains(g)));
        }
    }

    #[test]
    fn degenerate_range_is_constant() {
        let model = build_fast_spiking();
        let spec = InitialConditionSpec {
            voltage: [-65.0, -65.0],
            gate: [0.5, 0.5],
        };
        let x = sample_initial_condition(&spec, model.layout(), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(x, vec![-65.0, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn pair_draws_ten_states() {
        let model = build_feedforward_pair();
        let x = sample_initial_condition(
            &InitialConditionSpec::default(),
            model.layout(),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert_eq!(x.len(), 10);
    }

    #[test]
    fn control_holds_blocks_of_ten() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = sample_control(&InputSpec::default(), 1, 10.0, 500.0, 10, &mut rng).unwrap();
        assert_eq!(u.values().len(), 50);
        for block in u.values().chunks(10) {
            assert!(block.iter().all(|v| v == &block[0]));
        }
        assert!(u.covered_until() >= 500.0);
    }

    #[test]
    fn zeroed_channel_stays_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = InputSpec {
            zeroed_channels: vec![1],
            ..Default::default()
        };
        let u = sample_control(&spec, 2, 10.0, 1000.0, 10, &mut rng).unwrap();
        assert!(u.values().iter().all(|v| v[1] == 0.0));
        assert!(u.values().iter().any(|v| v[0] != 0.0));
    }

    #[test]
    fn unit_hold_draws_every_period() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = sample_control(&InputSpec::default(), 1, 10.0, 100.0, 1, &mut rng).unwrap();
        let v = u.values();
        assert!(v.windows(2).all(|w| w[0] != w[1]));
    }
}
