//! Test-set evaluation: the full-length loss on stored samples, plus spike
//! statistics on dense re-integrated trajectories.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Manifest, TrajectoryRecord};
use crate::error::{check_dim, Error, Result};
use crate::integrator::{integrate, IntegratorConfig};
use crate::neuron::ConductanceModel;
use crate::spikes::{median, SpikeDetector, SpikeMatching};
use crate::surrogate::{Surrogate, SurrogateParams};
use crate::training::record_loss;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOptions {
    /// Spacing of the dense comparison grid (ms).
    pub grid_step: f64,
    pub detector: SpikeDetector,
    /// Largest offset (ms) at which two spikes are considered the same.
    pub match_window: f64,
    pub integrator: IntegratorConfig,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            grid_step: 0.05,
            detector: SpikeDetector::default(),
            match_window: 5.0,
            integrator: IntegratorConfig::default(),
        }
    }
}

/// Reference and predicted outputs on a common dense grid, one vector per
/// output channel.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTrace {
    pub times: Vec<f64>,
    pub truth: Vec<Vec<f64>>,
    pub predicted: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub true_spikes: usize,
    pub predicted_spikes: usize,
    /// Predicted minus true spike count.
    pub count_error: i64,
    /// Absolute offsets of the matched pairs (ms).
    pub matched_errors: Vec<f64>,
    pub unmatched_true: usize,
    pub unmatched_predicted: usize,
    /// Median timing error over true spikes with unmatched ones counted as
    /// infinite; absent when there are no true spikes or the median is
    /// infinite.
    pub median_timing_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetrics {
    pub record: usize,
    pub loss: f64,
    pub channels: Vec<ChannelMetrics>,
}

impl TrajectoryMetrics {
    pub fn max_abs_count_error(&self) -> i64 {
        self.channels.iter().map(|c| c.count_error.abs()).max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Mean full-length loss over trajectories.
    pub loss: f64,
    /// Share of trajectories whose spike count is off by at most one on every
    /// channel.
    pub count_within_one: f64,
    /// Median over all true spikes of the timing error, unmatched spikes
    /// counted as infinite; absent when infinite or there are no spikes.
    pub median_timing_error: Option<f64>,
    pub true_spikes: usize,
    pub matched_spikes: usize,
    pub trajectories: Vec<TrajectoryMetrics>,
}

impl Evaluation {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("evaluation serialises")
    }
}

/// Checks that a surrogate was built for the dataset described by `m`.
pub fn check_compatible(s: &Surrogate, m: &Manifest) -> Result<()> {
    let c = s.config();
    check_dim("checkpoint state dimension", m.state_dim, c.state_dim)?;
    check_dim("checkpoint input dimension", m.input_dim, c.input_dim)?;
    check_dim("checkpoint output dimension", m.output_dim, c.output_dim)?;
    if c.delta != m.generation.delta {
        return Err(Error::contract(format!(
            "checkpoint period {} differs from dataset period {}",
            c.delta, m.generation.delta
        )));
    }
    Ok(())
}

/// Uniform grid `0, step, 2 step, ...` up to and including `t_final`.
pub fn dense_grid(t_final: f64, step: f64) -> Vec<f64> {
    let n = (t_final / step).floor() as usize;
    let mut g: Vec<f64> = (0..=n).map(|k| k as f64 * step).collect();
    if g.last().is_some_and(|&t| t < t_final) {
        g.push(t_final);
    }
    g
}

fn transpose(rows: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    (0..dim).map(|o| rows.iter().map(|r| r[o]).collect()).collect()
}

/// Re-integrates `record` on a dense grid and evaluates the surrogate there.
pub fn dense_trace(
    model: &ConductanceModel,
    s: &Surrogate,
    params: &SurrogateParams,
    record: &TrajectoryRecord,
    horizon: f64,
    output_indices: &[usize],
    opts: &EvalOptions,
) -> Result<DenseTrace> {
    let times = dense_grid(horizon, opts.grid_step);
    let path = integrate(model, &record.x0, &record.control, horizon, &times, &opts.integrator)?;
    let truth: Vec<Vec<f64>> = path
        .states
        .iter()
        .map(|x| output_indices.iter().map(|&i| x[i]).collect())
        .collect();
    let predicted = s.predict(params, &record.x0, &record.control, &times)?;
    let d = output_indices.len();
    Ok(DenseTrace {
        truth: transpose(&truth, d),
        predicted: transpose(&predicted, d),
        times,
    })
}

pub fn channel_metrics(
    times: &[f64],
    truth: &[f64],
    predicted: &[f64],
    detector: &SpikeDetector,
    window: f64,
) -> ChannelMetrics {
    let a = detector.detect(times, truth);
    let b = detector.detect(times, predicted);
    let m = SpikeMatching::new(&a, &b, window);
    let errors: Vec<f64> = m.timing_errors().collect();
    ChannelMetrics {
        true_spikes: a.len(),
        predicted_spikes: b.len(),
        count_error: b.len() as i64 - a.len() as i64,
        matched_errors: m.pairs.iter().map(|(r, p)| (r - p).abs()).collect(),
        unmatched_true: m.unmatched_reference.len(),
        unmatched_predicted: m.unmatched_predicted.len(),
        median_timing_error: median(&errors).filter(|v| v.is_finite()),
    }
}

pub fn trace_metrics(trace: &DenseTrace, opts: &EvalOptions) -> Vec<ChannelMetrics> {
    trace
        .truth
        .iter()
        .zip(&trace.predicted)
        .map(|(a, b)| channel_metrics(&trace.times, a, b, &opts.detector, opts.match_window))
        .collect()
}

/// Combines per-trajectory metrics into summary statistics.
pub fn summarise(trajectories: Vec<TrajectoryMetrics>) -> Evaluation {
    let n = trajectories.len().max(1) as f64;
    let loss = trajectories.iter().map(|t| t.loss).sum::<f64>() / n;
    let within = trajectories.iter().filter(|t| t.max_abs_count_error() <= 1).count() as f64 / n;
    let mut errors = Vec::new();
    let mut matched = 0;
    for c in trajectories.iter().flat_map(|t| &t.channels) {
        errors.extend(&c.matched_errors);
        errors.extend(std::iter::repeat_n(f64::INFINITY, c.unmatched_true));
        matched += c.matched_errors.len();
    }
    Evaluation {
        loss,
        count_within_one: within,
        median_timing_error: median(&errors).filter(|v| v.is_finite()),
        true_spikes: errors.len(),
        matched_spikes: matched,
        trajectories,
    }
}

/// Evaluates `params` on `records`; returns the summary and the dense traces.
pub fn evaluate(
    model: &ConductanceModel,
    s: &Surrogate,
    params: &SurrogateParams,
    manifest: &Manifest,
    records: &[&TrajectoryRecord],
    opts: &EvalOptions,
) -> Result<(Evaluation, Vec<DenseTrace>)> {
    check_compatible(s, manifest)?;
    check_dim("model state dimension", manifest.state_dim, model.state_dim())?;
    let out = &manifest.output_indices;
    let results: Vec<(TrajectoryMetrics, DenseTrace)> = records
        .par_iter()
        .map(|r| {
            let loss = record_loss(s, params, r, out)?;
            let trace = dense_trace(model, s, params, r, manifest.generation.horizon, out, opts)?;
            let m = TrajectoryMetrics {
                record: r.id,
                loss,
                channels: trace_metrics(&trace, opts),
            };
            Ok((m, trace))
        })
        .collect::<Result<_>>()?;
    let (metrics, traces) = results.into_iter().unzip();
    Ok((summarise(metrics), traces))
}
