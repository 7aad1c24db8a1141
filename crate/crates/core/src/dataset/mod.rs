//! Trajectory datasets: generation, rejection-sampling pruning, splitting and
//! the on-disk format.

mod io;
mod lhs;
mod prune;
mod sampling;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controls::PiecewiseConstantControl;
use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegratorConfig};
use crate::neuron::ConductanceModel;
use crate::util::stream_rng;

pub use io::MANIFEST_FILE;
pub use lhs::{latin_hypercube_times, stratum_start};
pub use prune::{normalised_density, prune_record, strict_local_maxima, Density, PruneConfig, Pruned};
pub use sampling::{sample_control, sample_initial_condition, InitialConditionSpec, InputSpec};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub n_traj: usize,
    pub samples_per_traj: usize,
    /// ms
    pub horizon: f64,
    /// ms
    pub delta: f64,
    pub hold_periods: usize,
    pub initial: InitialConditionSpec,
    pub input: InputSpec,
    pub seed: u64,
}

impl GenerationConfig {
    /// Single fast-spiking neuron driven by inputs redrawn every 100 ms.
    pub fn fast_spiking(seed: u64) -> Self {
        Self {
            n_traj: 800,
            samples_per_traj: 50_000,
            horizon: 500.0,
            delta: 10.0,
            hold_periods: 10,
            initial: InitialConditionSpec::default(),
            input: InputSpec::default(),
            seed,
        }
    }

    /// Feedforward pair with only the first neuron driven.
    pub fn feedforward_pair(seed: u64) -> Self {
        Self {
            n_traj: 200,
            horizon: 1000.0,
            input: InputSpec {
                zeroed_channels: vec![1],
                ..InputSpec::default()
            },
            ..Self::fast_spiking(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 || self.samples_per_traj == 0 {
            return Err(Error::contract("need at least one trajectory and one sample"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::contract("horizon must be positive"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::contract("input period must be positive"));
        }
        if self.hold_periods == 0 {
            return Err(Error::contract("hold_periods must be at least 1"));
        }
        self.initial.validate()?;
        self.input.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub time: String,
    pub voltage: String,
    pub current: String,
    pub conductance: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            time: "ms".into(),
            voltage: "mV".into(),
            current: "uA".into(),
            conductance: "mS".into(),
        }
    }
}

/// What pruning did to the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneSummary {
    pub config: PruneConfig,
    pub samples_before: usize,
    pub samples_after: usize,
    /// Positions of records whose outputs were constant and were kept whole.
    pub degenerate_records: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitAssignment {
    pub seed: u64,
    pub fractions: [f64; 3],
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Part {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Part::Train),
            "val" | "validation" => Ok(Part::Val),
            "test" => Ok(Part::Test),
            _ => Err(Error::contract(format!("unknown split {s:?}"))),
        }
    }
}

/// File bookkeeping for one record; refreshed whenever the dataset is written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordEntry {
    pub id: usize,
    pub samples: usize,
    pub sha256: String,
    pub ctrl_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub model: String,
    pub state_dim: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    /// State coordinates observed as outputs.
    pub output_indices: Vec<usize>,
    /// `coupling[i][j]` drives neuron `j` from neuron `i`.
    pub coupling: Vec<Vec<f64>>,
    /// Original indices of records whose integration failed.
    pub aborted: Vec<usize>,
    pub units: Units,
    pub generation: GenerationConfig,
    pub integrator: IntegratorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pruning: Option<PruneSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitAssignment>,
    #[serde(default)]
    pub records: Vec<RecordEntry>,
}

/// Samples of one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    /// Index of the trajectory in the generation run; also its RNG stream.
    pub id: usize,
    pub x0: Vec<f64>,
    pub control: PiecewiseConstantControl,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Outputs `states[k][indices]` for every sample.
    pub fn outputs(&self, indices: &[usize]) -> Vec<Vec<f64>> {
        self.states
            .iter()
            .map(|x| indices.iter().map(|&i| x[i]).collect())
            .collect()
    }

    fn check(&self, state_dim: usize, horizon: f64) -> Result<()> {
        if self.times.len() != self.states.len() {
            return Err(Error::contract("record times and states differ in length"));
        }
        if self.states.iter().any(|x| x.len() != state_dim) || self.x0.len() != state_dim {
            return Err(Error::contract("record state has the wrong dimension"));
        }
        if self.times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::contract("record times are not strictly ascending"));
        }
        if self.times.first().is_some_and(|&t| t < 0.0) || self.times.last().is_some_and(|&t| t > horizon) {
            return Err(Error::contract("record times fall outside the horizon"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub records: Vec<TrajectoryRecord>,
}

impl Dataset {
    pub fn total_samples(&self) -> usize {
        self.records.iter().map(TrajectoryRecord::len).sum()
    }

    pub fn indices(&self, part: Part) -> Result<&[usize]> {
        let split = self
            .manifest
            .split
            .as_ref()
            .ok_or_else(|| Error::contract("dataset has not been split"))?;
        Ok(match part {
            Part::Train => &split.train,
            Part::Val => &split.val,
            Part::Test => &split.test,
        })
    }

    pub fn part(&self, part: Part) -> Result<Vec<&TrajectoryRecord>> {
        Ok(self.indices(part)?.iter().map(|&i| &self.records[i]).collect())
    }

    pub fn outputs(&self, record: &TrajectoryRecord) -> Vec<Vec<f64>> {
        record.outputs(&self.manifest.output_indices)
    }

    /// Checks records against the manifest.
    pub fn validate(&self) -> Result<()> {
        let m = &self.manifest;
        for r in &self.records {
            r.check(m.state_dim, m.generation.horizon)?;
            if r.control.dim() != m.input_dim {
                return Err(Error::contract("record control has the wrong dimension"));
            }
        }
        if let Some(s) = &m.split {
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            if all != (0..self.records.len()).collect::<Vec<_>>() {
                return Err(Error::contract("split does not partition the records"));
            }
        }
        Ok(())
    }
}

fn generate_record(
    model: &ConductanceModel,
    cfg: &GenerationConfig,
    int_cfg: &IntegratorConfig,
    id: usize,
) -> Result<TrajectoryRecord> {
    let mut rng = stream_rng(cfg.seed, id as u64);
    let x0 = sample_initial_condition(&cfg.initial, model.layout(), &mut rng);
    let control = sample_control(
        &cfg.input,
        model.input_dim(),
        cfg.delta,
        cfg.horizon,
        cfg.hold_periods,
        &mut rng,
    )?;
    let mut times = latin_hypercube_times(cfg.samples_per_traj, cfg.horizon, &mut rng);
    if times[0] != 0.0 {
        times.insert(0, 0.0);
    }
    let path = integrate(model, &x0, &control, cfg.horizon, &times, int_cfg)?;
    Ok(TrajectoryRecord {
        id,
        x0,
        control,
        times: path.times,
        states: path.states,
    })
}

/// Samples `n_traj` trajectories of `model`, one independent RNG stream per
/// trajectory.
pub fn generate(
    model: &ConductanceModel,
    cfg: &GenerationConfig,
    int_cfg: &IntegratorConfig,
) -> Result<Dataset> {
    cfg.validate()?;
    int_cfg.validate()?;
    let results: Vec<Result<TrajectoryRecord>> = (0..cfg.n_traj)
        .into_par_iter()
        .map(|i| generate_record(model, cfg, int_cfg, i))
        .collect();
    let mut records = Vec::with_capacity(cfg.n_traj);
    let mut aborted = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(r) => records.push(r),
            Err(e) => {
                log::warn!("trajectory {i} aborted: {e}");
                aborted.push(i);
            }
        }
    }
    if aborted.len() * 100 > cfg.n_traj {
        return Err(Error::GenerationFailed {
            failed: aborted.len(),
            total: cfg.n_traj,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        model: model.name().to_string(),
        state_dim: model.state_dim(),
        input_dim: model.input_dim(),
        output_dim: model.output_dim(),
        output_indices: model.layout().voltage_indices().to_vec(),
        coupling: model.coupling().to_vec(),
        aborted,
        units: Units::default(),
        generation: cfg.clone(),
        integrator: int_cfg.clone(),
        pruning: None,
        split: None,
        records: Vec::new(),
    };
    Ok(Dataset { manifest, records })
}

/// Rejection-samples every record against its output-amplitude density.
pub fn prune(ds: &Dataset, cfg: &PruneConfig) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&cfg.floor) || cfg.floor == 0.0 {
        return Err(Error::contract("density floor must lie in (0, 1]"));
    }
    if cfg.density == Density::Amplitude && ds.manifest.output_dim != 1 {
        return Err(Error::contract(
            "the amplitude density needs a single output; use max-amplitude",
        ));
    }
    if ds.manifest.split.is_some() {
        return Err(Error::contract("prune before splitting"));
    }
    if let Some(r) = ds.records.iter().find(|r| r.len() < 2) {
        return Err(Error::contract(format!("record {} has fewer than two samples", r.id)));
    }
    let pruned: Vec<Pruned> = ds
        .records
        .par_iter()
        .map(|r| {
            let mut rng = stream_rng(cfg.seed, r.id as u64);
            prune_record(&r.times, &ds.outputs(r), cfg.density, cfg.floor, &mut rng)
        })
        .collect();
    let mut degenerate = Vec::new();
    let records: Vec<TrajectoryRecord> = ds
        .records
        .iter()
        .zip(&pruned)
        .enumerate()
        .map(|(pos, (r, p))| {
            if p.degenerate {
                log::warn!("record {} has constant outputs; all samples kept", r.id);
                degenerate.push(pos);
            }
            TrajectoryRecord {
                id: r.id,
                x0: r.x0.clone(),
                control: r.control.clone(),
                times: p.kept.iter().map(|&k| r.times[k]).collect(),
                states: p.kept.iter().map(|&k| r.states[k].clone()).collect(),
            }
        })
        .collect();
    let mut manifest = ds.manifest.clone();
    manifest.pruning = Some(PruneSummary {
        config: cfg.clone(),
        samples_before: ds.total_samples(),
        samples_after: records.iter().map(TrajectoryRecord::len).sum(),
        degenerate_records: degenerate,
    });
    Ok(Dataset { manifest, records })
}

/// Randomly assigns whole trajectories to train, validation and test parts.
pub fn split(ds: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Dataset> {
    let n = ds.records.len();
    if n < 3 {
        return Err(Error::contract(format!("cannot split {n} records three ways")));
    }
    if fractions.iter().any(|&f| !(f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::contract(format!(
            "split fractions {fractions:?} must be positive and sum to one"
        )));
    }
    let count = |f: f64| (n as f64 * f + 1e-9).floor() as usize;
    let n_val = count(fractions[1]);
    let n_test = count(fractions[2]);
    let n_train = n - n_val - n_test;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    let mut manifest = ds.manifest.clone();
    manifest.split = Some(SplitAssignment {
        seed,
        fractions,
        train: sorted(&order[..n_train]),
        val: sorted(&order[n_train..n_train + n_val]),
        test: sorted(&order[n_train + n_val..]),
    });
    Ok(Dataset {
        manifest,
        records: ds.records.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuron::{build_fast_spiking, build_feedforward_pair};

    fn small(n: usize, k: usize, seed: u64) -> GenerationConfig {
        GenerationConfig {
            n_traj: n,
            samples_per_traj: k,
            horizon: 50.0,
            ..GenerationConfig::fast_spiking(seed)
        }
    }

    #[test]
    fn two_records_of_nine_samples() {
        let ds = generate(&build_fast_spiking(), &small(2, 8, 1), &IntegratorConfig::default()).unwrap();
        assert_eq!(ds.records.len(), 2);
        for r in &ds.records {
            assert_eq!(r.len(), 9);
            assert_eq!(r.times[0], 0.0);
            assert_eq!(r.states[0], r.x0);
        }
        ds.validate().unwrap();
    }

    #[test]
    fn generation_is_deterministic() {
        let model = build_fast_spiking();
        let a = generate(&model, &small(3, 20, 7), &IntegratorConfig::default()).unwrap();
        let b = generate(&model, &small(3, 20, 7), &IntegratorConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = generate(&model, &small(3, 20, 8), &IntegratorConfig::default()).unwrap();
        assert_ne!(a.records[0].x0, c.records[0].x0);
    }

    #[test]
    fn pair_records_carry_two_outputs() {
        let cfg = GenerationConfig {
            n_traj: 2,
            samples_per_traj: 10,
            horizon: 30.0,
            ..GenerationConfig::feedforward_pair(0)
        };
        let ds = generate(&build_feedforward_pair(), &cfg, &IntegratorConfig::default()).unwrap();
        assert_eq!(ds.manifest.output_indices.len(), 2);
        assert!(ds.records.iter().all(|r| r.control.values().iter().all(|v| v[1] == 0.0)));
    }

    #[test]
    fn split_counts() {
        let ds = generate(&build_fast_spiking(), &small(10, 2, 0), &IntegratorConfig::default()).unwrap();
        let s = split(&ds, [0.6, 0.2, 0.2], 3).unwrap();
        let a = s.manifest.split.as_ref().unwrap();
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (6, 2, 2));
        s.validate().unwrap();
        assert_eq!(split(&ds, [0.6, 0.2, 0.2], 3).unwrap(), s);

        let five = Dataset {
            records: ds.records[..5].to_vec(),
            manifest: ds.manifest.clone(),
        };
        let a = split(&five, [0.6, 0.2, 0.2], 1).unwrap().manifest.split.unwrap();
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (3, 1, 1));

        let two = Dataset {
            records: ds.records[..2].to_vec(),
            manifest: ds.manifest.clone(),
        };
        assert!(split(&two, [0.6, 0.2, 0.2], 1).is_err());
        assert!(split(&ds, [0.5, 0.2, 0.2], 1).is_err());
    }

    #[test]
    fn pruning_keeps_a_subset() {
        let ds = generate(&build_fast_spiking(), &small(2, 400, 4), &IntegratorConfig::default()).unwrap();
        let p = prune(&ds, &PruneConfig::new(Density::Amplitude, 9)).unwrap();
        for (before, after) in ds.records.iter().zip(&p.records) {
            assert!(after.len() < before.len());
            assert_eq!(after.times[0], 0.0);
            assert!(after.times.iter().all(|t| before.times.contains(t)));
        }
        let summary = p.manifest.pruning.as_ref().unwrap();
        assert_eq!(summary.samples_after, p.total_samples());
        assert!(prune(&ds, &PruneConfig::new(Density::Amplitude, 9)).unwrap() == p);
    }
}
