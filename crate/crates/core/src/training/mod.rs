//! Windowed-loss training with Adam, a plateau learning-rate schedule and
//! early stopping on the full-length validation loss.

mod adam;
mod windows;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::surrogate::{Surrogate, SurrogateParams, Target};

pub use adam::Adam;
pub use windows::{make_windows, SpanUnit, Window, WindowItem, WindowSpec};

/// Window items per gradient work unit. Each unit is summed sequentially and
/// the units are combined by a pairwise tree in batch order, so the result
/// does not depend on how units are scheduled across threads.
const CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_init: f64,
    pub batch_size: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub stop_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub window: WindowSpec,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            lr_init: 1e-3,
            batch_size: 256,
            plateau_patience: 5,
            plateau_factor: 10.0,
            stop_patience: 15,
            max_epochs: 500,
            seed,
            window: WindowSpec::new(seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_init > 0.0) {
            return Err(Error::contract("learning rate must be positive"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::contract("batch size and epoch cap must be positive"));
        }
        if self.plateau_patience == 0 || self.stop_patience == 0 {
            return Err(Error::contract("patience values must be at least 1"));
        }
        if !(self.plateau_factor > 1.0) {
            return Err(Error::contract("plateau factor must exceed 1"));
        }
        self.window.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
    NonFinite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub train_records: usize,
    pub val_records: usize,
    /// File holding the best parameters, filled in by whoever saves them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::contract(format!("bad training report: {e}")))
    }

    pub fn first_val_loss(&self) -> Option<f64> {
        self.epochs.first().map(|e| e.val_loss)
    }
}

fn tree_sum(mut parts: Vec<(f64, Vec<f64>)>) -> (f64, Vec<f64>) {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some((la, mut ga)) = it.next() {
            match it.next() {
                Some((lb, gb)) => {
                    for (a, b) in ga.iter_mut().zip(&gb) {
                        *a += b;
                    }
                    next.push((la + lb, ga));
                }
                None => next.push((la, ga)),
            }
        }
        parts = next;
    }
    parts.pop().expect("at least one part")
}

/// Mean over items of the mean 1-norm error over their targets.
pub fn windowed_loss(s: &Surrogate, params: &SurrogateParams, items: &[WindowItem]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    let losses: Vec<f64> = items
        .par_iter()
        .map(|it| Ok(s.loss(params, &it.x, &it.control, &it.targets())? / it.times.len() as f64))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / items.len() as f64)
}

/// [`windowed_loss`] and its gradient.
pub fn grad(s: &Surrogate, params: &SurrogateParams, items: &[WindowItem]) -> Result<(f64, Vec<f64>)> {
    if items.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    let scale = 1.0 / items.len() as f64;
    let parts: Vec<(f64, Vec<f64>)> = items
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; s.param_count()];
            let mut loss = 0.0;
            for it in chunk {
                let w = scale / it.times.len() as f64;
                loss += s.loss_and_grad(params, &it.x, &it.control, &it.targets(), w, &mut g)? * w;
            }
            Ok((loss, g))
        })
        .collect::<Result<_>>()?;
    let (loss, g) = tree_sum(parts);
    Ok((loss, g))
}

/// Mean 1-norm error of the full-length predictions from `t = 0`, averaged
/// per record and then over records.
pub fn validation_loss(
    s: &Surrogate,
    params: &SurrogateParams,
    records: &[&TrajectoryRecord],
    output_indices: &[usize],
) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::contract("no validation records"));
    }
    let per_record: Vec<f64> = records
        .par_iter()
        .map(|r| record_loss(s, params, r, output_indices))
        .collect::<Result<_>>()?;
    Ok(per_record.iter().sum::<f64>() / records.len() as f64)
}

/// Mean over samples of the 1-norm error of full-length predictions.
pub fn record_loss(s: &Surrogate, params: &SurrogateParams, r: &TrajectoryRecord, output_indices: &[usize]) -> Result<f64> {
    let outputs = r.outputs(output_indices);
    let targets: Vec<Target> = r.times.iter().zip(&outputs).map(|(&t, y)| Target { t, y }).collect();
    Ok(s.loss(params, &r.x0, &r.control, &targets)? / r.len() as f64)
}

fn epoch_windows(
    records: &[&TrajectoryRecord],
    spec: &WindowSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, Window)>> {
    let mut all = Vec::new();
    for (i, r) in records.iter().enumerate() {
        all.extend(make_windows(r, spec, rng)?.into_iter().map(|w| (i, w)));
    }
    Ok(all)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fit {
    pub params: SurrogateParams,
    pub report: TrainReport,
}

/// Trains from `s.init_params(cfg.seed)`. See [`fit_with`].
pub fn fit(
    s: &Surrogate,
    train: &[&TrajectoryRecord],
    val: &[&TrajectoryRecord],
    output_indices: &[usize],
    cfg: &TrainConfig,
) -> Result<Fit> {
    let init = s.init_params(cfg.seed);
    fit_with(s, init, train, val, output_indices, cfg, |_| {})
}

/// Minimises the windowed loss over `train` and returns the parameters with
/// the smallest validation loss. `on_epoch` sees every finished epoch.
pub fn fit_with(
    s: &Surrogate,
    init: SurrogateParams,
    train: &[&TrajectoryRecord],
    val: &[&TrajectoryRecord],
    output_indices: &[usize],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Fit> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::contract("training and validation sets must be non-empty"));
    }
    if train.iter().any(|t| val.iter().any(|v| std::ptr::eq(*t, *v) || t.id == v.id)) {
        return Err(Error::contract("training and validation sets overlap"));
    }
    if output_indices.len() != s.config().output_dim {
        return Err(Error::contract("output indices do not match the surrogate"));
    }
    let mut params = init;
    let mut adam = Adam::new(s.param_count());
    let mut window_rng = ChaCha8Rng::seed_from_u64(cfg.window.seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut lr = cfg.lr_init;
    let mut report = TrainReport {
        epochs: Vec::new(),
        stop_reason: StopReason::MaxEpochs,
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        train_records: train.len(),
        val_records: val.len(),
        checkpoint: None,
    };
    let mut best = params.clone();
    let mut since_best = 0;
    let mut since_plateau = 0;
    let mut windows = epoch_windows(train, &cfg.window, &mut window_rng)?;

    for epoch in 1..=cfg.max_epochs {
        if epoch > 1 && cfg.window.resample_per_epoch {
            windows = epoch_windows(train, &cfg.window, &mut window_rng)?;
        }
        let mut order: Vec<usize> = (0..windows.len()).collect();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let items: Vec<WindowItem> = batch
                .iter()
                .map(|&b| {
                    let (r, w) = &windows[b];
                    WindowItem::new(train[*r], w, output_indices)
                })
                .collect::<Result<_>>()?;
            let (loss, g) = grad(s, &params, &items)?;
            if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
                report.stop_reason = StopReason::NonFinite;
                return Err(Error::NonFiniteLoss {
                    epoch,
                    report: Box::new(report),
                });
            }
            loss_sum += loss * items.len() as f64;
            adam.step(&mut params.values, &g, lr);
        }
        let val_loss = validation_loss(s, &params, val, output_indices)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / windows.len() as f64,
            val_loss,
            lr,
        };
        on_epoch(&record);
        report.epochs.push(record);
        if !val_loss.is_finite() {
            report.stop_reason = StopReason::NonFinite;
            return Err(Error::NonFiniteLoss {
                epoch,
                report: Box::new(report),
            });
        }
        if val_loss < report.best_val_loss - 1e-12 {
            report.best_val_loss = val_loss;
            report.best_epoch = epoch;
            best = params.clone();
            since_best = 0;
            since_plateau = 0;
        } else {
            since_best += 1;
            since_plateau += 1;
            if since_best >= cfg.stop_patience {
                report.stop_reason = StopReason::Patience;
                break;
            }
            if since_plateau >= cfg.plateau_patience {
                lr /= cfg.plateau_factor;
                since_plateau = 0;
            }
        }
    }
    Ok(Fit { params: best, report })
}
