use rand::Rng;
use serde::{Deserialize, Serialize};

/// Scalar pruning density built from the record outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Density {
    /// Normalised amplitude of the single output.
    Amplitude,
    /// Maximum over outputs of their normalised amplitudes.
    MaxAmplitude,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneConfig {
    pub density: Density,
    pub floor: f64,
    pub seed: u64,
}

impl PruneConfig {
    pub fn new(density: Density, seed: u64) -> Self {
        Self {
            density,
            floor: 0.01,
            seed,
        }
    }
}

/// Outcome of pruning one record.
#[derive(Clone, Debug, PartialEq)]
pub struct Pruned {
    /// Retained sample indices, ascending.
    pub kept: Vec<usize>,
    /// Every output was constant, so all samples were kept.
    pub degenerate: bool,
}

/// Per-sample density before flooring, or `None` when every output is constant.
///
/// `outputs[k][o]` is output `o` at sample `k`.
pub fn normalised_density(outputs: &[Vec<f64>], density: Density) -> Option<Vec<f64>> {
    let n_out = outputs.first().map_or(0, Vec::len);
    let used = match density {
        Density::Amplitude => n_out.min(1),
        Density::MaxAmplitude => n_out,
    };
    let ranges: Vec<(usize, f64, f64)> = (0..used)
        .filter_map(|o| {
            let (lo, hi) = outputs
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| {
                    (lo.min(y[o]), hi.max(y[o]))
                });
            (hi > lo).then_some((o, lo, hi))
        })
        .collect();
    if ranges.is_empty() {
        return None;
    }
    Some(
        outputs
            .iter()
            .map(|y| {
                ranges
                    .iter()
                    .map(|&(o, lo, hi)| (y[o] - lo) / (hi - lo))
                    .fold(0.0, f64::max)
            })
            .collect(),
    )
}

/// Indices of interior samples strictly greater than both neighbours in any
/// output.
pub fn strict_local_maxima(outputs: &[Vec<f64>]) -> Vec<bool> {
    let n = outputs.len();
    let mut out = vec![false; n];
    for k in 1..n.saturating_sub(1) {
        out[k] = (0..outputs[k].len())
            .any(|o| outputs[k][o] > outputs[k - 1][o] && outputs[k][o] > outputs[k + 1][o]);
    }
    out
}

/// Rejection-sample one record.
///
/// A uniform draw is consumed for every sample, including those that are kept
/// unconditionally, so the random stream does not depend on the outputs.
pub fn prune_record<R: Rng + ?Sized>(
    times: &[f64],
    outputs: &[Vec<f64>],
    density: Density,
    floor: f64,
    rng: &mut R,
) -> Pruned {
    let n = times.len();
    let Some(p) = normalised_density(outputs, density) else {
        return Pruned {
            kept: (0..n).collect(),
            degenerate: true,
        };
    };
    let p: Vec<f64> = p.into_iter().map(|p| p.max(floor)).collect();
    let m = p.iter().copied().fold(0.0, f64::max);
    let peaks = strict_local_maxima(outputs);
    let kept = (0..n)
        .filter(|&k| {
            let draw: f64 = rng.gen();
            times[k] == 0.0 || peaks[k] || draw <= p[k] / m
        })
        .collect();
    Pruned {
        kept,
        degenerate: false,
    }
}
