use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::controls::PiecewiseConstantControl;
use crate::dataset::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::surrogate::{complete_steps, Target};

/// Unit in which [`WindowSpec::max_span`] is counted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanUnit {
    /// Targets lie at most `max_span` input periods after the anchor.
    Periods,
    /// Targets lie at most `max_span` sample indices after the anchor.
    Samples,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub max_span: usize,
    pub span_unit: SpanUnit,
    pub max_targets: usize,
    pub seed: u64,
    pub resample_per_epoch: bool,
}

impl WindowSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            max_span: 20,
            span_unit: SpanUnit::Periods,
            max_targets: 5,
            seed,
            resample_per_epoch: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_span == 0 || self.max_targets == 0 {
            return Err(Error::contract("window span and target count must be positive"));
        }
        Ok(())
    }
}

/// Anchor sample and the target samples predicted from it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Window {
    pub anchor: usize,
    pub targets: Vec<usize>,
}

/// Draws the target set of every anchor of `record`.
///
/// Whatever the span unit, no target needs more than `1 + max_span`
/// recurrent steps from its anchor.
pub fn make_windows<R: Rng + ?Sized>(record: &TrajectoryRecord, spec: &WindowSpec, rng: &mut R) -> Result<Vec<Window>> {
    if record.is_empty() {
        return Err(Error::contract(format!("record {} has no samples", record.id)));
    }
    let n = record.len();
    let delta = record.control.delta();
    (0..n)
        .map(|k| {
            let t_k = record.times[k];
            // same arithmetic as `PiecewiseConstantControl::shift`
            let phase = (t_k - (t_k / delta).floor() * delta).clamp(0.0, delta);
            let phase = if phase >= delta { phase - delta } else { phase };
            let steps_ok = |j: usize| ((record.times[j] - t_k + phase) / delta).floor() as usize <= spec.max_span;
            let last = match spec.span_unit {
                SpanUnit::Samples => (k + spec.max_span).min(n - 1),
                SpanUnit::Periods => n - 1,
            };
            let mut end = k;
            while end < last && steps_ok(end + 1) {
                end += 1;
            }
            let available = end - k + 1;
            let mut targets: Vec<usize> = index::sample(rng, available, spec.max_targets.min(available))
                .into_iter()
                .map(|i| k + i)
                .collect();
            targets.sort_unstable();
            Ok(Window { anchor: k, targets })
        })
        .collect()
}

/// A window with its data pulled out of the record: the anchor state acts as
/// initial condition under the control shifted to the anchor time.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowItem {
    pub x: Vec<f64>,
    pub control: PiecewiseConstantControl,
    pub times: Vec<f64>,
    pub outputs: Vec<Vec<f64>>,
}

impl WindowItem {
    pub fn new(record: &TrajectoryRecord, window: &Window, output_indices: &[usize]) -> Result<Self> {
        let k = window.anchor;
        let t_k = record.times[k];
        Ok(Self {
            x: record.states[k].clone(),
            control: record.control.shift(t_k)?,
            times: window.targets.iter().map(|&j| record.times[j] - t_k).collect(),
            outputs: window
                .targets
                .iter()
                .map(|&j| output_indices.iter().map(|&o| record.states[j][o]).collect())
                .collect(),
        })
    }

    pub fn targets(&self) -> Vec<Target<'_>> {
        self.times
            .iter()
            .zip(&self.outputs)
            .map(|(&t, y)| Target { t, y })
            .collect()
    }

    /// Recurrent steps needed for the farthest target.
    pub fn max_steps(&self) -> usize {
        self.times
            .iter()
            .map(|&t| complete_steps(t, &self.control) + 1)
            .max()
            .unwrap_or(0)
    }
}
