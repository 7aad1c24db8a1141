//! Spike detection on sampled voltage traces and spike-train comparison.

use serde::{Deserialize, Serialize};

/// Peaks above `threshold` (mV); peaks closer than `refractory` (ms) to a
/// higher neighbouring peak are merged into it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeDetector {
    pub threshold: f64,
    pub refractory: f64,
}

impl Default for SpikeDetector {
    fn default() -> Self {
        Self {
            threshold: -10.0,
            refractory: 2.0,
        }
    }
}

impl SpikeDetector {
    /// Times of the detected spike peaks, ascending.
    pub fn detect(&self, times: &[f64], voltage: &[f64]) -> Vec<f64> {
        assert_eq!(times.len(), voltage.len());
        let mut peaks: Vec<(f64, f64)> = Vec::new();
        for k in 1..voltage.len().saturating_sub(1) {
            let v = voltage[k];
            if v > self.threshold && v > voltage[k - 1] && v >= voltage[k + 1] {
                match peaks.last_mut() {
                    Some(last) if times[k] - last.0 < self.refractory => {
                        if v > last.1 {
                            *last = (times[k], v);
                        }
                    }
                    _ => peaks.push((times[k], v)),
                }
            }
        }
        peaks.into_iter().map(|(t, _)| t).collect()
    }
}

/// One-to-one pairing of reference and predicted spikes within a tolerance
/// window, closest pairs first.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpikeMatching {
    /// `(reference time, predicted time)` pairs, ordered by reference time.
    pub pairs: Vec<(f64, f64)>,
    pub unmatched_reference: Vec<f64>,
    pub unmatched_predicted: Vec<f64>,
}

impl SpikeMatching {
    pub fn new(reference: &[f64], predicted: &[f64], window: f64) -> Self {
        let mut candidates = Vec::new();
        for (i, r) in reference.iter().enumerate() {
            for (j, p) in predicted.iter().enumerate() {
                let d = (r - p).abs();
                if d <= window {
                    candidates.push((d, i, j));
                }
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut ref_used = vec![false; reference.len()];
        let mut pred_used = vec![false; predicted.len()];
        let mut pairs = Vec::new();
        for (_, i, j) in candidates {
            if !ref_used[i] && !pred_used[j] {
                ref_used[i] = true;
                pred_used[j] = true;
                pairs.push((reference[i], predicted[j]));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let unmatched = |xs: &[f64], used: &[bool]| {
            xs.iter()
                .zip(used)
                .filter(|(_, u)| !**u)
                .map(|(x, _)| *x)
                .collect()
        };
        Self {
            pairs,
            unmatched_reference: unmatched(reference, &ref_used),
            unmatched_predicted: unmatched(predicted, &pred_used),
        }
    }

    /// Timing error of every reference spike; unmatched spikes count as
    /// infinitely late.
    pub fn timing_errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs
            .iter()
            .map(|(r, p)| (r - p).abs())
            .chain(self.unmatched_reference.iter().map(|_| f64::INFINITY))
    }
}

/// Median of `values` (mean of the middle pair for even counts); `None` when
/// empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}
