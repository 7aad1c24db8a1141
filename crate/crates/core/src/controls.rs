//! Piecewise-constant inputs and the flow-algebra operators on them.

use crate::error::{Error, Result};

/// A piecewise-constant signal with period `delta`, possibly shifted in time.
///
/// The signal takes `values[k]` on `[k delta - phase, (k + 1) delta - phase)`
/// (intersected with `t >= 0`). Past the last stored value the final value is
/// held.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseConstantControl {
    delta: f64,
    phase: f64,
    values: Vec<Vec<f64>>,
}

impl PiecewiseConstantControl {
    pub fn new(delta: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_phase(delta, 0.0, values)
    }

    pub fn with_phase(delta: f64, phase: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::contract(format!("period must be positive, got {delta}")));
        }
        if !(0.0..delta).contains(&phase) {
            return Err(Error::contract(format!("phase {phase} outside [0, {delta})")));
        }
        let Some(first) = values.first() else {
            return Err(Error::contract("a control needs at least one value"));
        };
        let dim = first.len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::contract("control values differ in dimension"));
        }
        Ok(Self {
            delta,
            phase,
            values,
        })
    }

    /// Constant signal.
    pub fn constant(delta: f64, value: Vec<f64>) -> Result<Self> {
        Self::new(delta, vec![value])
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// Value with index `k`, clamped to the last stored value.
    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k.min(self.values.len() - 1)]
    }

    /// Index of the value active at time `t >= 0`.
    pub fn index_at(&self, t: f64) -> usize {
        ((t + self.phase) / self.delta).floor() as usize
    }

    pub fn eval(&self, t: f64) -> Result<&[f64]> {
        if !(t >= 0.0) {
            return Err(Error::contract(format!("control evaluated at t = {t} < 0")));
        }
        Ok(self.value(self.index_at(t)))
    }

    /// Time up to which the stored values reach before the clamp takes over.
    pub fn covered_until(&self) -> f64 {
        self.values.len() as f64 * self.delta - self.phase
    }

    /// Switch times `k delta - phase` in `(0, t_final)`, ascending.
    pub fn switch_times(&self, t_final: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 1usize;
        loop {
            let s = k as f64 * self.delta - self.phase;
            if s >= t_final {
                break;
            }
            if s > 0.0 {
                out.push(s);
            }
            k += 1;
        }
        out
    }

    /// The concatenation that follows `self` before `s` and `other` (restarted
    /// at time zero) from `s` on.
    ///
    /// `s` must lie on the switching grid of both signals, and both must share
    /// period and dimension.
    pub fn concat(&self, other: &Self, s: f64) -> Result<Self> {
        if self.delta != other.delta {
            return Err(Error::contract("concatenated controls differ in period"));
        }
        if self.dim() != other.dim() {
            return Err(Error::contract("concatenated controls differ in dimension"));
        }
        if !(s >= 0.0) {
            return Err(Error::contract("concatenation time must be nonnegative"));
        }
        let steps = (s / self.delta).round();
        if (steps * self.delta - s).abs() > 1e-9 * self.delta.max(s) {
            return Err(Error::contract(format!(
                "concatenation time {s} is not a multiple of the period {}",
                self.delta
            )));
        }
        let steps = steps as usize;
        if steps == 0 {
            return Ok(other.clone());
        }
        if self.phase != 0.0 || other.phase != 0.0 {
            return Err(Error::contract(
                "shifted controls can only be concatenated at s = 0",
            ));
        }
        let mut values: Vec<Vec<f64>> = (0..steps).map(|k| self.value(k).to_vec()).collect();
        values.extend(other.values.iter().cloned());
        Self::new(self.delta, values)
    }

    /// Time shift `t -> u(t + s)`.
    pub fn shift(&self, s: f64) -> Result<Self> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::contract(format!("shift must be nonnegative, got {s}")));
        }
        let total = self.phase + s;
        let mut drop = (total / self.delta).floor();
        let mut phase = total - drop * self.delta;
        if phase >= self.delta {
            phase -= self.delta;
            drop += 1.0;
        }
        if phase < 0.0 {
            phase = 0.0;
        }
        let drop = (drop as usize).min(self.values.len() - 1);
        Ok(Self {
            delta: self.delta,
            phase,
            values: self.values[drop..].to_vec(),
        })
    }
}
