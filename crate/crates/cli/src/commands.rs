//! The `gen-data`, `train`, `eval` and `compare` verbs.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ensgan_core::metrics::ensemble_inversion_mse;
use ensgan_core::prelude::*;
use ensgan_core::sampling::resample_dataset;
use ensgan_core::training::write_history;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ModelKind};
use crate::svg;

pub const DATASET_CSV: &str = "dataset.csv";
pub const DATASET_META: &str = "dataset.meta";
pub const HISTORY_CSV: &str = "history.csv";
pub const METRICS_CSV: &str = "metrics.csv";
pub const COMPARE_CSV: &str = "compare.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const LAST_GOOD_CHECKPOINT: &str = "last_good.ckpt";
pub const SCATTER_SVG: &str = "scatter.svg";

pub const METRICS_HEADER: &str =
    "checkpoint,epoch,frechet,precision,recall,inversion_mse,oos_mass,oos_ci";
pub const METRIC_NAMES: [&str; 6] = [
    "frechet",
    "precision",
    "recall",
    "inversion_mse",
    "oos_mass",
    "oos_ci",
];

fn refuse_existing(paths: &[PathBuf], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    if let Some(p) = paths.iter().find(|p| p.exists()) {
        bail!(
            "{} exists; pass --force-overwrite to replace it",
            p.display()
        );
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Builds and certifies the dataset, then writes `dataset.csv` and
/// `dataset.meta` into the output directory.
pub fn gen_data(cfg: &ExperimentConfig, force: bool) -> Result<DisconnectedDataset> {
    let d = &cfg.dataset;
    let dataset = DisconnectedDataset::build(d.components.clone(), d.weights.clone(), d.n, d.seed)
        .context("dataset certification failed")?;
    let (csv, meta) = (cfg.output.join(DATASET_CSV), cfg.output.join(DATASET_META));
    refuse_existing(&[csv.clone(), meta.clone()], force)?;
    fs::create_dir_all(&cfg.output)
        .with_context(|| format!("creating {}", cfg.output.display()))?;
    dataset.save(&csv, &meta)?;
    Ok(dataset)
}

pub fn load_dataset(dir: &Path) -> Result<DisconnectedDataset> {
    let (csv, meta) = (dir.join(DATASET_CSV), dir.join(DATASET_META));
    if !csv.exists() || !meta.exists() {
        bail!("no dataset in {}; run gen-data first", dir.display());
    }
    DisconnectedDataset::load(&csv, &meta)
        .with_context(|| format!("loading dataset from {}", dir.display()))
}

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:06}.ckpt")
}

/// Outcome of one training run.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub epochs: usize,
    pub checkpoints: usize,
    pub final_coupling: f64,
}

fn train_one(
    cfg: &ExperimentConfig,
    train: &TrainConfig,
    dir: &Path,
    dataset: &DisconnectedDataset,
    force: bool,
) -> Result<RunSummary> {
    let ck_dir = dir.join(CHECKPOINT_DIR);
    refuse_existing(&[dir.join(HISTORY_CSV), ck_dir.clone()], force)?;
    if ck_dir.exists() {
        fs::remove_dir_all(&ck_dir).with_context(|| format!("clearing {}", ck_dir.display()))?;
    }
    fs::create_dir_all(&ck_dir).with_context(|| format!("creating {}", ck_dir.display()))?;

    let result = match cfg.model.kind {
        ModelKind::Single => train_single(train, &cfg.model.generator, &cfg.model.critic, dataset),
        ModelKind::Ensemble(_) => {
            let (g, d) = cfg.member_specs()?;
            ensgan_core::training::train(train, &g, &d, dataset)
        }
    };
    let outcome = match result {
        Ok(o) => o,
        Err(Error::Diverged {
            epoch,
            loss,
            last_good,
        }) => {
            if let Some(b) = last_good {
                let (good_epoch, model) = *b;
                let path = ck_dir.join(LAST_GOOD_CHECKPOINT);
                Checkpoint {
                    model,
                    seed: train.seed,
                    epoch: good_epoch,
                }
                .save(&path)?;
                bail!(
                    "training in {} diverged at epoch {epoch} (loss {loss}); epoch {good_epoch} kept as {}",
                    dir.display(),
                    path.display()
                );
            }
            bail!(
                "training in {} diverged at epoch {epoch} (loss {loss}) before any checkpoint",
                dir.display()
            );
        }
        Err(e) => return Err(e).with_context(|| format!("training in {}", dir.display())),
    };

    for ck in &outcome.checkpoints {
        ck.save(&ck_dir.join(checkpoint_name(ck.epoch)))?;
    }
    let last = outcome
        .checkpoints
        .last()
        .ok_or_else(|| anyhow!("training produced no checkpoint"))?;
    last.save(&ck_dir.join(FINAL_CHECKPOINT))?;
    let mut w = create(&dir.join(HISTORY_CSV))?;
    write_history(&outcome.history, &mut w)?;
    w.flush()?;
    Ok(RunSummary {
        dir: dir.to_path_buf(),
        epochs: last.epoch,
        checkpoints: outcome.checkpoints.len(),
        final_coupling: outcome.model.generator_coupling()?,
    })
}

/// Joins per-run results, naming what succeeded when anything failed.
fn gather<T>(results: Vec<(PathBuf, Result<T>)>, verb: &str) -> Result<Vec<T>> {
    let failed: Vec<String> = results
        .iter()
        .filter_map(|(d, r)| {
            r.as_ref()
                .err()
                .map(|e| format!("  {}: {e:#}", d.display()))
        })
        .collect();
    if failed.is_empty() {
        return Ok(results
            .into_iter()
            .map(|(_, r)| r.expect("checked"))
            .collect());
    }
    let ok: Vec<String> = results
        .iter()
        .filter(|(_, r)| r.is_ok())
        .map(|(d, _)| format!("  {}", d.display()))
        .collect();
    let ok = if ok.is_empty() {
        "  none".to_string()
    } else {
        ok.join("\n")
    };
    bail!(
        "{verb} failed for {} run(s):\n{}\ncompleted:\n{ok}",
        failed.len(),
        failed.join("\n")
    )
}

/// Trains every run of the configuration on the dataset in the output
/// directory.
pub fn train(cfg: &ExperimentConfig, force: bool) -> Result<Vec<RunSummary>> {
    let dataset = load_dataset(&cfg.output)?;
    if dataset.k() != cfg.k() {
        bail!("dataset has {} components, config {}", dataset.k(), cfg.k());
    }
    let results = cfg
        .runs()
        .into_par_iter()
        .map(|(dir, train)| {
            let r = train_one(cfg, &train, &dir, &dataset, force);
            (dir, r)
        })
        .collect();
    gather(results, "train")
}

/// One row of `metrics.csv`; disabled metrics are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub checkpoint: String,
    pub epoch: usize,
    pub frechet: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub inversion_mse: Option<f64>,
    pub oos: Option<OosEstimate>,
}

impl MetricRow {
    fn values(&self) -> [Option<f64>; 6] {
        [
            self.frechet,
            self.precision,
            self.recall,
            self.inversion_mse,
            self.oos.map(|o| o.mass),
            self.oos.map(|o| o.half_width()),
        ]
    }

    fn from_report(
        checkpoint: String,
        epoch: usize,
        r: MetricReport,
        on: crate::config::MetricToggles,
    ) -> Self {
        MetricRow {
            checkpoint,
            epoch,
            frechet: on.frechet.then_some(r.frechet),
            precision: on.precision_recall.then_some(r.precision),
            recall: on.precision_recall.then_some(r.recall),
            inversion_mse: on.inversion.then_some(r.inversion_mse),
            oos: on.oos.then_some(r.oos),
        }
    }
}

pub fn write_metrics<W: Write>(rows: &[MetricRow], mut w: W) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        let vals: Vec<String> = r
            .values()
            .iter()
            .map(|v| v.map(|x| x.to_string()).unwrap_or_default())
            .collect();
        writeln!(w, "{},{},{}", r.checkpoint, r.epoch, vals.join(","))?;
    }
    Ok(())
}

/// `(checkpoint, epoch, values)` rows of a metrics file.
/// Checkpoint name, epoch and the six metric values of one metrics.csv row.
pub type MetricLine = (String, usize, [Option<f64>; 6]);

pub fn read_metrics(path: &Path) -> Result<Vec<MetricLine>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != METRICS_HEADER {
        bail!("{}: unexpected header `{header}`", path.display());
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || anyhow!("{}: malformed row {}", path.display(), i + 2);
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad());
        }
        let epoch = f[1].parse().map_err(|_| bad())?;
        let mut vals = [None; 6];
        for (v, s) in vals.iter_mut().zip(&f[2..]) {
            if !s.is_empty() {
                *v = Some(s.parse().map_err(|_| bad())?);
            }
        }
        rows.push((f[0].to_string(), epoch, vals));
    }
    Ok(rows)
}

fn evaluate(
    model: &EnsembleModel,
    dataset: &DisconnectedDataset,
    cfg: &ExperimentConfig,
    checkpoint: String,
    epoch: usize,
) -> Result<MetricRow> {
    let on = cfg.eval.metrics;
    let s = &cfg.eval.settings;
    if on == crate::config::MetricToggles::ALL {
        return Ok(MetricRow::from_report(
            checkpoint,
            epoch,
            evaluate_model(model, dataset, s)?,
            on,
        ));
    }
    let real = &dataset.points()[..s.metric_samples.min(dataset.len())];
    let mut row = MetricRow {
        checkpoint,
        epoch,
        frechet: None,
        precision: None,
        recall: None,
        inversion_mse: None,
        oos: None,
    };
    if on.frechet || on.precision_recall {
        let (generated, _) = sample_mixture(model, s.metric_samples, s.seed)?;
        if on.frechet {
            row.frechet = Some(frechet_gaussian(real, &generated)?);
        }
        if on.precision_recall {
            let (p, r) = knn_precision_recall(real, &generated, s.k)?;
            row.precision = Some(p);
            row.recall = Some(r);
        }
    }
    if on.inversion {
        let targets: Vec<Vec<f64>> = dataset
            .points()
            .iter()
            .take(s.inversion_targets)
            .map(|p| p.to_vec())
            .collect();
        let mut inv = s.inversion;
        inv.seed = s.seed;
        row.inversion_mse = Some(ensemble_inversion_mse(model, &targets, &inv)?);
    }
    if on.oos {
        let (pts, _) = sample_mixture(model, s.oos_samples, s.seed.wrapping_add(1))?;
        let tau = s.threshold.unwrap_or_else(|| dataset.default_threshold());
        row.oos = Some(out_of_support_mass(&pts, dataset, tau)?);
    }
    Ok(row)
}

/// Options of the `eval` verb.
#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    /// Evaluate the dataset resampler instead of trained checkpoints.
    pub resampler: bool,
    /// Explicit checkpoints; empty means every `epoch_*.ckpt` of each run.
    pub checkpoints: Vec<PathBuf>,
    /// Also write `scatter.svg` for the last evaluated model.
    pub svg: bool,
}

/// `epoch_*.ckpt` files of a run, in epoch order.
pub fn list_checkpoints(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let dir = run_dir.join(CHECKPOINT_DIR);
    let mut out: Vec<PathBuf> = fs::read_dir(&dir)
        .with_context(|| format!("no checkpoints in {}; run train first", run_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("epoch_") && n.ends_with(".ckpt"))
        })
        .collect();
    out.sort();
    if out.is_empty() {
        bail!("no checkpoints in {}", dir.display());
    }
    Ok(out)
}

fn expected_specs(cfg: &ExperimentConfig) -> Result<(MlpSpec, MlpSpec)> {
    match cfg.model.kind {
        ModelKind::Single => Ok((cfg.model.generator.clone(), cfg.model.critic.clone())),
        ModelKind::Ensemble(_) => cfg.member_specs(),
    }
}

fn check_compatible(ck: &Checkpoint, cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    let (g, d) = expected_specs(cfg)?;
    let got_g = ck.model.generator_spec();
    let got_d = ck.model.critic_spec();
    if got_g.layer_sizes() != g.layer_sizes()
        || got_g.hidden() != g.hidden()
        || got_g.output() != g.output()
    {
        bail!(
            "{}: generator spec {got_g} does not match config {g}",
            path.display()
        );
    }
    if *got_d != d {
        bail!(
            "{}: critic spec {got_d} does not match config {d}",
            path.display()
        );
    }
    let k = match cfg.model.kind {
        ModelKind::Single => 1,
        ModelKind::Ensemble(_) => cfg.k(),
    };
    if ck.model.k() != k {
        bail!(
            "{}: checkpoint has {} members, config {k}",
            path.display(),
            ck.model.k()
        );
    }
    Ok(())
}

fn eval_run(
    cfg: &ExperimentConfig,
    dir: &Path,
    dataset: &DisconnectedDataset,
    opts: &EvalOptions,
    force: bool,
) -> Result<Vec<MetricRow>> {
    let out = dir.join(METRICS_CSV);
    let svg_path = dir.join(SCATTER_SVG);
    let mut targets = vec![out.clone()];
    if opts.svg {
        targets.push(svg_path.clone());
    }
    refuse_existing(&targets, force)?;
    fs::create_dir_all(dir)?;
    let s = &cfg.eval.settings;

    let rows = if opts.resampler {
        let report = evaluate_resampler(dataset, s)?;
        if opts.svg {
            let pts = resample_dataset(dataset, s.metric_samples, s.seed);
            fs::write(&svg_path, svg::scatter(dataset, &pts))?;
        }
        vec![MetricRow::from_report(
            "resampler".to_string(),
            0,
            report,
            cfg.eval.metrics,
        )]
    } else {
        let paths = if opts.checkpoints.is_empty() {
            list_checkpoints(dir)?
        } else {
            opts.checkpoints.clone()
        };
        let loaded = paths
            .iter()
            .map(|p| {
                let ck = Checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?;
                check_compatible(&ck, cfg, p)?;
                let name = p
                    .file_name()
                    .and_then(|n| n.to_str())
                    .unwrap_or("checkpoint")
                    .to_string();
                Ok((name, ck))
            })
            .collect::<Result<Vec<_>>>()?;
        let rows = loaded
            .par_iter()
            .map(|(name, ck)| evaluate(&ck.model, dataset, cfg, name.clone(), ck.epoch))
            .collect::<Result<Vec<_>>>()?;
        if opts.svg {
            let (_, last) = loaded.last().expect("at least one checkpoint");
            let (pts, _) = sample_mixture(&last.model, s.metric_samples, s.seed)?;
            fs::write(&svg_path, svg::scatter(dataset, &pts))?;
        }
        rows
    };
    let mut w = create(&out)?;
    write_metrics(&rows, &mut w)?;
    w.flush()?;
    Ok(rows)
}

/// Evaluates each run's checkpoints (or the resampler) and writes
/// `metrics.csv` per run.
pub fn eval(
    cfg: &ExperimentConfig,
    opts: &EvalOptions,
    force: bool,
) -> Result<Vec<(PathBuf, Vec<MetricRow>)>> {
    let dataset = load_dataset(&cfg.output)?;
    let dirs: Vec<PathBuf> = if opts.resampler || !opts.checkpoints.is_empty() {
        vec![cfg.output.clone()]
    } else {
        cfg.runs().into_iter().map(|(d, _)| d).collect()
    };
    let results = dirs
        .into_iter()
        .map(|d| {
            let r = eval_run(cfg, &d, &dataset, opts, force).map(|rows| (d.clone(), rows));
            (d, r)
        })
        .collect();
    gather(results, "eval")
}

fn run_label(dir: &Path) -> String {
    dir.file_name()
        .and_then(|n| n.to_str())
        .map(str::to_string)
        .unwrap_or_else(|| dir.display().to_string())
}

/// Long-format `run,epoch,metric,value` table over the runs' metrics
/// files. Every run must share one evaluation schedule.
pub fn compare(runs: &[PathBuf], out: &Path, force: bool) -> Result<usize> {
    if runs.len() < 2 {
        bail!("compare needs at least two runs, got {}", runs.len());
    }
    let target = out.join(COMPARE_CSV);
    refuse_existing(std::slice::from_ref(&target), force)?;
    let tables = runs
        .iter()
        .map(|r| read_metrics(&r.join(METRICS_CSV)))
        .collect::<Result<Vec<_>>>()?;
    let schedule = |t: &[MetricLine]| t.iter().map(|r| r.1).collect::<Vec<_>>();
    let reference = schedule(&tables[0]);
    for (run, table) in runs.iter().zip(&tables).skip(1) {
        let s = schedule(table);
        if s != reference {
            bail!(
                "schedule mismatch: {} evaluates epochs {:?} but {} evaluates {:?}",
                runs[0].display(),
                reference,
                run.display(),
                s
            );
        }
    }

    let mut labels: Vec<String> = Vec::with_capacity(runs.len());
    for r in runs {
        let base = run_label(r);
        let mut label = base.clone();
        let mut n = 2;
        while labels.contains(&label) {
            label = format!("{base}_{n}");
            n += 1;
        }
        labels.push(label);
    }

    fs::create_dir_all(out)?;
    let mut w = create(&target)?;
    writeln!(w, "run,epoch,metric,value")?;
    let mut count = 0;
    for (label, table) in labels.iter().zip(&tables) {
        for (_, epoch, vals) in table {
            for (name, v) in METRIC_NAMES.iter().zip(vals) {
                if let Some(v) = v {
                    writeln!(w, "{label},{epoch},{name},{v}")?;
                    count += 1;
                }
            }
        }
    }
    w.flush()?;
    Ok(count)
}

/// Run directories of a configuration, for `compare --config`.
pub fn config_runs(cfg: &ExperimentConfig) -> Vec<PathBuf> {
    cfg.runs().into_iter().map(|(d, _)| d).collect()
}
