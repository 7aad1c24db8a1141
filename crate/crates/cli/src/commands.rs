use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use spikeflow::dataset::{self, Dataset, Density, Manifest, Part, PruneConfig, MANIFEST_FILE};
use spikeflow::evaluation::{dense_grid, EvalOptions};
use spikeflow::neuron::{build_named, ConductanceModel, StateVariable};
use spikeflow::plot::{strip_plot, LinePlot, Series};
use spikeflow::surrogate::{Checkpoint, Encoding, Normalisation, Surrogate, SurrogateConfig};
use spikeflow::training::{fit_with, SpanUnit, TrainConfig, TrainReport};
use spikeflow::{integrate, sha256_hex, GenerationConfig, IntegratorConfig, PiecewiseConstantControl};

use crate::args::*;
use crate::output::{file_stamp, Staged};

pub struct Context {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub force: bool,
}

impl Context {
    fn target(&self, out: &Path) -> PathBuf {
        self.out_dir.join(out)
    }

    fn stage(&self, out: &Path) -> Result<Staged> {
        Staged::new(self.target(out), self.force)
    }
}

/// Everything needed to rerun a command: its resolved configuration, the
/// seed and the hashes of its inputs. No paths or timestamps, so identical
/// runs write identical stamps.
#[derive(Serialize)]
struct Stamp<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    inputs: BTreeMap<String, String>,
    config: C,
}

fn write_stamp<C: Serialize>(
    path: &Path,
    command: &str,
    seed: u64,
    inputs: BTreeMap<String, String>,
    config: C,
) -> Result<()> {
    let stamp = Stamp {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        inputs,
        config,
    };
    fs::write(path, toml::to_string(&stamp)?).with_context(|| format!("writing {}", path.display()))
}

fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).with_context(|| format!("reading {}", path.display()))?))
}

fn read_dataset(dir: &Path) -> Result<(Dataset, String)> {
    let ds = Dataset::read(dir).with_context(|| format!("reading dataset {}", dir.display()))?;
    let hash = file_hash(&dir.join(MANIFEST_FILE))?;
    Ok((ds, hash))
}

fn preset(model: ModelName, seed: u64) -> GenerationConfig {
    match model {
        ModelName::Fs => GenerationConfig::fast_spiking(seed),
        ModelName::Ffpair => GenerationConfig::feedforward_pair(seed),
    }
}

fn state_names(model: &ConductanceModel) -> Vec<String> {
    let layout = model.layout();
    (0..layout.len())
        .map(|i| match layout.variable_at(i).expect("index in layout") {
            (n, StateVariable::Voltage) => format!("V_{n}"),
            (n, StateVariable::M(k)) => format!("m{k}_{n}"),
            (n, StateVariable::N(k)) => format!("n{k}_{n}"),
        })
        .collect()
}

fn output_label(model: &ConductanceModel, index: usize) -> String {
    match model.layout().variable_at(index) {
        Some((n, StateVariable::Voltage)) => format!("V_{n} (mV)"),
        _ => format!("x_{index}"),
    }
}

/// The model a dataset was generated from, with its recorded coupling.
fn dataset_model(m: &Manifest) -> Result<ConductanceModel> {
    Ok(build_named(&m.model)?.with_coupling(m.coupling.clone())?)
}

#[derive(Serialize)]
struct SimulateStamp<'a> {
    model: &'a str,
    t_final: f64,
    input: &'a str,
    x0: Vec<f64>,
    dt: f64,
    delta: f64,
    integrator: &'a IntegratorConfig,
    control: Vec<Vec<f64>>,
}

fn parse_input(
    spec: &str,
    model: ModelName,
    input_dim: usize,
    delta: f64,
    t_final: f64,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<PiecewiseConstantControl> {
    if spec == "random" {
        let cfg = preset(model, seed);
        return Ok(dataset::sample_control(&cfg.input, input_dim, delta, t_final, cfg.hold_periods, rng)?);
    }
    let Some(value) = spec.strip_prefix("const:") else {
        bail!("--input must be const:<uA> or random, got {spec:?}");
    };
    let amp: f64 = value
        .parse()
        .with_context(|| format!("bad input amplitude {value:?}"))?;
    if !amp.is_finite() {
        bail!("input amplitude must be finite");
    }
    let mut v = vec![0.0; input_dim];
    v[0] = amp;
    Ok(PiecewiseConstantControl::constant(delta, v)?)
}

pub fn simulate(ctx: &Context, a: &SimulateArgs) -> Result<()> {
    if !(a.t_final >= 0.0 && a.t_final.is_finite()) {
        bail!("--t-final must be non-negative");
    }
    if !(a.dt > 0.0) {
        bail!("--dt must be positive");
    }
    let model = build_named(a.model.catalogue_name())?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let x0 = match a.x0 {
        InitialState::Rest => model.resting_state(&vec![0.0; model.input_dim()])?,
        InitialState::Random => {
            let cfg = preset(a.model, ctx.seed);
            dataset::sample_initial_condition(&cfg.initial, model.layout(), &mut rng)
        }
    };
    let control = parse_input(&a.input, a.model, model.input_dim(), a.delta, a.t_final, ctx.seed, &mut rng)?;
    let int_cfg = IntegratorConfig::with_rtol(a.rtol);
    let times = dense_grid(a.t_final, a.dt);
    let path = integrate(&model, &x0, &control, a.t_final, &times, &int_cfg)?;

    let mut csv = String::from("t");
    for name in state_names(&model) {
        csv.push(',');
        csv.push_str(&name);
    }
    csv.push('\n');
    for (t, x) in path.times.iter().zip(&path.states) {
        csv.push_str(&format!("{t:?}"));
        for v in x {
            csv.push_str(&format!(",{v:?}"));
        }
        csv.push('\n');
    }

    let out = ctx.stage(&a.out)?;
    fs::write(out.path(), csv)?;
    let plot = match &a.plot {
        Some(p) => {
            let staged = ctx.stage(p)?;
            let voltages: Vec<Vec<f64>> = model
                .layout()
                .voltage_indices()
                .iter()
                .map(|&i| path.states.iter().map(|x| x[i]).collect())
                .collect();
            let panels = voltages
                .iter()
                .enumerate()
                .map(|(n, v)| {
                    (
                        format!("V_{n} (mV)"),
                        vec![Series {
                            label: "V",
                            values: v,
                            dashed: false,
                        }],
                    )
                })
                .collect();
            let svg = LinePlot {
                title: &format!("{} under {}", model.name(), a.input),
                x_label: "t (ms)",
                times: &path.times,
                panels,
            }
            .to_svg();
            fs::write(staged.path(), svg)?;
            Some(staged)
        }
        None => None,
    };
    let stamp = ctx.stage(&file_stamp(&a.out))?;
    write_stamp(
        stamp.path(),
        "simulate",
        ctx.seed,
        BTreeMap::new(),
        SimulateStamp {
            model: model.name(),
            t_final: a.t_final,
            input: &a.input,
            x0,
            dt: a.dt,
            delta: a.delta,
            integrator: &int_cfg,
            control: control.values().to_vec(),
        },
    )?;
    let written = out.commit()?;
    if let Some(p) = plot {
        p.commit()?;
    }
    stamp.commit()?;
    println!(
        "{} samples over [0, {}] ms -> {} ({} steps, {} rejected)",
        path.times.len(),
        a.t_final,
        written.display(),
        path.stats.accepted,
        path.stats.rejected
    );
    Ok(())
}

#[derive(Serialize)]
struct DatasetStamp<C: Serialize> {
    manifest_sha256: String,
    #[serde(flatten)]
    params: C,
}

fn write_dataset<C: Serialize>(
    ctx: &Context,
    out: &Path,
    ds: &Dataset,
    command: &str,
    inputs: BTreeMap<String, String>,
    params: C,
) -> Result<PathBuf> {
    let staged = ctx.stage(out)?;
    ds.write(staged.path())?;
    let manifest_sha256 = file_hash(&staged.path().join(MANIFEST_FILE))?;
    write_stamp(
        &staged.path().join("stamp.toml"),
        command,
        ctx.seed,
        inputs,
        DatasetStamp {
            manifest_sha256,
            params,
        },
    )?;
    staged.commit()
}

#[derive(Serialize)]
struct GenerateStamp<'a> {
    model: &'a str,
    generation: &'a GenerationConfig,
    integrator: &'a IntegratorConfig,
}

pub fn generate(ctx: &Context, a: &GenerateArgs) -> Result<()> {
    let model = build_named(a.preset.catalogue_name())?;
    let mut cfg = preset(a.preset, ctx.seed);
    if let Some(n) = a.n_traj {
        cfg.n_traj = n;
    }
    if let Some(k) = a.k_samples {
        cfg.samples_per_traj = k;
    }
    if let Some(t) = a.t_final {
        cfg.horizon = t;
    }
    if let Some(d) = a.delta {
        cfg.delta = d;
    }
    if let Some(h) = a.hold {
        cfg.hold_periods = h;
    }
    let int_cfg = IntegratorConfig::with_rtol(a.rtol);
    let ds = dataset::generate(&model, &cfg, &int_cfg)?;
    let dir = write_dataset(
        ctx,
        &a.out,
        &ds,
        "generate",
        BTreeMap::new(),
        GenerateStamp {
            model: model.name(),
            generation: &cfg,
            integrator: &int_cfg,
        },
    )?;
    println!(
        "{} trajectories ({} aborted), {} samples -> {}",
        ds.records.len(),
        ds.manifest.aborted.len(),
        ds.total_samples(),
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct PruneStamp<'a> {
    prune: &'a PruneConfig,
}

pub fn prune(ctx: &Context, a: &PruneArgs) -> Result<()> {
    let (ds, hash) = read_dataset(&a.dataset)?;
    let density = match a.density {
        DensityArg::Auto if ds.manifest.output_dim == 1 => Density::Amplitude,
        DensityArg::Auto | DensityArg::MaxAmplitude => Density::MaxAmplitude,
        DensityArg::Amplitude => Density::Amplitude,
    };
    let cfg = PruneConfig {
        floor: a.floor,
        ..PruneConfig::new(density, ctx.seed)
    };
    let pruned = dataset::prune(&ds, &cfg)?;
    let dir = write_dataset(
        ctx,
        &a.out,
        &pruned,
        "prune",
        BTreeMap::from([("dataset".to_string(), hash)]),
        PruneStamp { prune: &cfg },
    )?;
    println!(
        "{} -> {} samples -> {}",
        ds.total_samples(),
        pruned.total_samples(),
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SplitStamp {
    fractions: [f64; 3],
}

pub fn split(ctx: &Context, a: &SplitArgs) -> Result<()> {
    let fractions: [f64; 3] = a
        .fractions
        .as_slice()
        .try_into()
        .map_err(|_| anyhow::anyhow!("--fractions needs exactly three values"))?;
    let (ds, hash) = read_dataset(&a.dataset)?;
    let out = dataset::split(&ds, fractions, ctx.seed)?;
    let dir = write_dataset(
        ctx,
        &a.out,
        &out,
        "split",
        BTreeMap::from([("dataset".to_string(), hash)]),
        SplitStamp { fractions },
    )?;
    let s = out.manifest.split.as_ref().expect("split was just assigned");
    println!(
        "train {} / val {} / test {} trajectories -> {}",
        s.train.len(),
        s.val.len(),
        s.test.len(),
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainStamp<'a> {
    surrogate: &'a SurrogateConfig,
    training: &'a TrainConfig,
    encoding: Encoding,
    checkpoint_sha256: String,
}

pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const REPORT_FILE: &str = "report.json";

pub fn train(ctx: &Context, a: &TrainArgs) -> Result<()> {
    let (ds, hash) = read_dataset(&a.dataset)?;
    let m = &ds.manifest;
    if m.split.is_none() {
        bail!("dataset {} has no train/val/test split; run `split` first", a.dataset.display());
    }
    let hidden = a.hidden.unwrap_or(if m.output_dim == 1 { 24 } else { 32 });
    let config = SurrogateConfig::for_manifest(hidden, m);
    let s = Surrogate::new(config.clone(), Normalisation::from_manifest(m))?;
    let mut cfg = TrainConfig::new(ctx.seed);
    cfg.lr_init = a.lr;
    cfg.batch_size = a.batch_size;
    cfg.max_epochs = a.max_epochs;
    cfg.plateau_patience = a.plateau_patience;
    cfg.stop_patience = a.stop_patience;
    cfg.window.max_span = a.window;
    cfg.window.span_unit = match a.window_unit {
        SpanArg::Periods => SpanUnit::Periods,
        SpanArg::Samples => SpanUnit::Samples,
    };
    cfg.window.max_targets = a.targets;
    let encoding = match a.encoding {
        EncodingArg::Decimal => Encoding::Decimal,
        EncodingArg::F64le => Encoding::F64le,
    };

    let train = ds.part(Part::Train)?;
    let val = ds.part(Part::Val)?;
    println!(
        "training hidden {hidden} ({} parameters) on {} trajectories, validating on {}",
        s.param_count(),
        train.len(),
        val.len()
    );
    let fit = fit_with(&s, s.init_params(cfg.seed), &train, &val, &m.output_indices, &cfg, |e| {
        println!(
            "epoch {:>4}  train {:.6}  val {:.6}  lr {:e}",
            e.epoch, e.train_loss, e.val_loss, e.lr
        );
    })?;

    let staged = ctx.stage(&a.out)?;
    fs::create_dir_all(staged.path())?;
    let ck = Checkpoint {
        config: config.clone(),
        normalisation: s.normalisation().clone(),
        seed: cfg.seed,
        params: fit.params,
    };
    let ck_path = staged.path().join(CHECKPOINT_FILE);
    ck.write(&ck_path, encoding)?;
    let mut report = fit.report;
    report.checkpoint = Some(CHECKPOINT_FILE.into());
    fs::write(staged.path().join(REPORT_FILE), report.to_json())?;
    write_stamp(
        &staged.path().join("stamp.toml"),
        "train",
        ctx.seed,
        BTreeMap::from([("dataset".to_string(), hash)]),
        TrainStamp {
            surrogate: &config,
            training: &cfg,
            encoding,
            checkpoint_sha256: file_hash(&ck_path)?,
        },
    )?;
    let dir = staged.commit()?;
    println!(
        "stopped ({:?}) after {} epochs; best val {:.6} at epoch {} -> {}",
        report.stop_reason,
        report.epochs.len(),
        report.best_val_loss,
        report.best_epoch,
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvaluateStamp<'a> {
    split: &'a str,
    options: &'a EvalOptions,
    plots: bool,
}

pub fn evaluate(ctx: &Context, a: &EvaluateArgs) -> Result<()> {
    let part: Part = a.split.parse()?;
    let ck = Checkpoint::read(&a.checkpoint)
        .with_context(|| format!("reading checkpoint {}", a.checkpoint.display()))?;
    let ck_hash = file_hash(&a.checkpoint)?;
    let (ds, hash) = read_dataset(&a.dataset)?;
    let m = &ds.manifest;
    let s = ck.surrogate()?;
    let model = dataset_model(m)?;
    let records = ds.part(part)?;
    let opts = EvalOptions {
        grid_step: a.grid_step,
        integrator: m.integrator.clone(),
        ..EvalOptions::default()
    };
    let (eval, traces) = spikeflow::evaluation::evaluate(&model, &s, &ck.params, m, &records, &opts)?;

    let staged = ctx.stage(&a.out)?;
    fs::create_dir_all(staged.path())?;
    fs::write(staged.path().join("metrics.json"), eval.to_json())?;
    if a.plot {
        let dir = staged.path().join("plots");
        fs::create_dir_all(&dir)?;
        for (r, trace) in records.iter().zip(&traces) {
            let panels = m
                .output_indices
                .iter()
                .enumerate()
                .map(|(o, &i)| {
                    (
                        output_label(&model, i),
                        vec![
                            Series {
                                label: "true",
                                values: &trace.truth[o],
                                dashed: false,
                            },
                            Series {
                                label: "surrogate",
                                values: &trace.predicted[o],
                                dashed: true,
                            },
                        ],
                    )
                })
                .collect();
            let svg = LinePlot {
                title: &format!("trajectory {}", r.id),
                x_label: "t (ms)",
                times: &trace.times,
                panels,
            }
            .to_svg();
            fs::write(dir.join(format!("trajectory_{}.svg", r.id)), svg)?;
        }
    }
    write_stamp(
        &staged.path().join("stamp.toml"),
        "evaluate",
        ctx.seed,
        BTreeMap::from([("checkpoint".to_string(), ck_hash), ("dataset".to_string(), hash)]),
        EvaluateStamp {
            split: &a.split,
            options: &opts,
            plots: a.plot,
        },
    )?;
    let dir = staged.commit()?;
    let timing = eval
        .median_timing_error
        .map_or("n/a".to_string(), |v| format!("{v:.3} ms"));
    println!(
        "{} trajectories: loss {:.6}, spike count within one {:.1}%, median spike timing error {}, matched {}/{} spikes -> {}",
        eval.trajectories.len(),
        eval.loss,
        100.0 * eval.count_within_one,
        timing,
        eval.matched_spikes,
        eval.true_spikes,
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct PlotStamp<'a> {
    labels: &'a [String],
    values: &'a [f64],
}

pub fn plot(ctx: &Context, a: &PlotArgs) -> Result<()> {
    if a.reports.is_empty() {
        bail!("need at least one report");
    }
    if !a.labels.is_empty() && a.labels.len() != a.reports.len() {
        bail!("got {} labels for {} reports", a.labels.len(), a.reports.len());
    }
    let mut inputs = BTreeMap::new();
    let mut values = Vec::new();
    for (k, p) in a.reports.iter().enumerate() {
        let path = if p.is_dir() { p.join(REPORT_FILE) } else { p.clone() };
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let report = TrainReport::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
        inputs.insert(format!("report_{k}"), sha256_hex(text.as_bytes()));
        values.push(report.best_val_loss);
    }
    let labels: Vec<String> = if a.labels.is_empty() {
        vec!["runs".into(); values.len()]
    } else {
        a.labels.clone()
    };
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for (label, v) in labels.iter().zip(&values) {
        match groups.iter_mut().find(|g| &g.0 == label) {
            Some(g) => g.1.push(*v),
            None => groups.push((label.clone(), vec![*v])),
        }
    }
    let svg = strip_plot("best validation loss per run", "loss", &groups);
    let staged = ctx.stage(&a.out)?;
    fs::write(staged.path(), svg)?;
    let stamp = ctx.stage(&file_stamp(&a.out))?;
    write_stamp(
        stamp.path(),
        "plot",
        ctx.seed,
        inputs,
        PlotStamp {
            labels: &labels,
            values: &values,
        },
    )?;
    let out = staged.commit()?;
    stamp.commit()?;
    println!("{} runs -> {}", values.len(), out.display());
    Ok(())
}
