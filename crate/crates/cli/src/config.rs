//! Experiment configuration in sectioned `key = value` form.
//!
//! ```text
//! [dataset]
//! component.0 = disk -3 0 1
//! component.1 = disk 3 0 1
//! weights = 0.5 0.5
//! n = 2000
//! seed = 7
//!
//! [model]
//! mode = independent
//!
//! [train]
//! epochs = 2000
//!
//! [output]
//! dir = runs/full_ensemble
//! ```
//!
//! Lines starting with `#` are comments. Unknown sections and keys are
//! rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use ensgan_core::networks::equivalent_width;
use ensgan_core::prelude::*;

const SECTIONS: &[(&str, &[&str])] = &[
    ("dataset", &["weights", "n", "seed"]),
    (
        "model",
        &["mode", "lambda", "generator", "critic", "member_width"],
    ),
    (
        "train",
        &[
            "value",
            "epochs",
            "batch_size",
            "n_critic",
            "learning_rate",
            "optimizer",
            "seed",
            "eval_interval",
        ],
    ),
    (
        "eval",
        &[
            "metrics",
            "metric_samples",
            "oos_samples",
            "threshold",
            "k",
            "inversion_targets",
            "inversion_iters",
            "inversion_restarts",
            "inversion_lr",
            "seed",
        ],
    ),
    ("output", &["dir"]),
];

/// Parsed sections: section → key → (line, value).
type Raw = BTreeMap<String, BTreeMap<String, (usize, String)>>;

fn known_key(section: &str, key: &str) -> bool {
    if section == "dataset"
        && key
            .strip_prefix("component.")
            .is_some_and(|i| i.parse::<usize>().is_ok())
    {
        return true;
    }
    SECTIONS
        .iter()
        .any(|(s, keys)| *s == section && keys.contains(&key))
}

fn parse_raw(text: &str) -> Result<Raw> {
    let mut raw = Raw::new();
    let mut section: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if !SECTIONS.iter().any(|(s, _)| *s == name) {
                bail!("line {no}: unknown section [{name}]");
            }
            if raw.contains_key(name) {
                bail!("line {no}: section [{name}] appears twice");
            }
            raw.insert(name.to_string(), BTreeMap::new());
            section = Some(name.to_string());
            continue;
        }
        let Some(sec) = &section else {
            bail!("line {no}: key outside any section");
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {no}: expected `key = value`"))?;
        let key = key.trim();
        if !known_key(sec, key) {
            bail!("line {no}: unknown key `{key}` in [{sec}]");
        }
        let entries = raw.get_mut(sec).expect("section inserted on entry");
        if entries
            .insert(key.to_string(), (no, value.trim().to_string()))
            .is_some()
        {
            bail!("line {no}: duplicate key `{key}` in [{sec}]");
        }
    }
    Ok(raw)
}

struct Section<'a> {
    name: &'static str,
    entries: Option<&'a BTreeMap<String, (usize, String)>>,
}

impl Section<'_> {
    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.and_then(|e| e.get(key)) {
            None => Ok(None),
            Some((no, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("line {no}: bad [{}] {key} `{v}`: {e}", self.name)),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.and_then(|e| e.get(key)) {
            None => Ok(None),
            Some((no, v)) => v
                .split_whitespace()
                .map(|t| {
                    t.parse().map_err(|e| {
                        anyhow!("line {no}: bad [{}] {key} entry `{t}`: {e}", self.name)
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

/// What `[model] mode` trains.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelKind {
    /// One generator/critic pair on the pooled data.
    Single,
    /// `K` members under a sharing mode. `L1` runs once per `λ`.
    Ensemble(SharingMode),
}

/// Hidden width of each member network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MemberWidth {
    /// Hidden widths as given by the specs.
    Given,
    /// Largest width with `K · members < single` parameters, per network.
    Auto,
    Fixed(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSection {
    pub components: Vec<ComponentSpec>,
    pub weights: Vec<f64>,
    pub n: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSection {
    pub kind: ModelKind,
    /// One entry per run; more than one makes a sweep.
    pub lambdas: Vec<f64>,
    pub generator: MlpSpec,
    pub critic: MlpSpec,
    pub member_width: MemberWidth,
}

/// Which metrics `eval` computes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricToggles {
    pub frechet: bool,
    pub precision_recall: bool,
    pub inversion: bool,
    pub oos: bool,
}

impl MetricToggles {
    pub const ALL: MetricToggles = MetricToggles {
        frechet: true,
        precision_recall: true,
        inversion: true,
        oos: true,
    };
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSection {
    pub metrics: MetricToggles,
    pub settings: EvalSettings,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub output: PathBuf,
}

fn parse_metrics(names: &[String]) -> Result<MetricToggles> {
    let mut t = MetricToggles {
        frechet: false,
        precision_recall: false,
        inversion: false,
        oos: false,
    };
    for n in names {
        match n.as_str() {
            "frechet" => t.frechet = true,
            "precision_recall" => t.precision_recall = true,
            "inversion" => t.inversion = true,
            "oos" => t.oos = true,
            other => bail!(
                "unknown metric `{other}`; expected frechet, precision_recall, inversion or oos"
            ),
        }
    }
    Ok(t)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw = parse_raw(text)?;
        let section = |name: &'static str| Section {
            name,
            entries: raw.get(name),
        };

        let ds = section("dataset");
        let mut components = Vec::new();
        if let Some(entries) = ds.entries {
            let count = entries
                .keys()
                .filter(|k| k.starts_with("component."))
                .count();
            for i in 0..count {
                let c: ComponentSpec = ds.get(&format!("component.{i}"))?.ok_or_else(|| {
                    anyhow!(
                        "[dataset] components must be numbered 0..{count}, missing component.{i}"
                    )
                })?;
                components.push(c);
            }
        }
        if components.is_empty() {
            bail!("[dataset] needs at least one component.N entry");
        }
        let k = components.len();
        let dataset = DatasetSection {
            weights: ds
                .list("weights")?
                .unwrap_or_else(|| vec![1.0 / k as f64; k]),
            n: ds.get("n")?.unwrap_or(2000),
            seed: ds.get("seed")?.unwrap_or(0),
            components,
        };

        let tr = section("train");
        let value: ValueKind = tr.get("value")?.unwrap_or(ValueKind::wasserstein());
        let epochs = tr.get("epochs")?.unwrap_or(2000);
        let seed = tr.get("seed")?.unwrap_or(0);

        let md = section("model");
        let mode: String = md.get("mode")?.unwrap_or_else(|| "independent".to_string());
        let lambdas: Option<Vec<f64>> = md.list("lambda")?;
        let (kind, lambdas) = match mode.as_str() {
            "single" => (ModelKind::Single, vec![]),
            "l1" => {
                let ls = lambdas
                    .ok_or_else(|| anyhow!("mode l1 needs `lambda` (one or more values)"))?;
                if ls.is_empty() || ls.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                    bail!("`lambda` must list finite values ≥ 0");
                }
                (ModelKind::Ensemble(SharingMode::L1 { lambda: ls[0] }), ls)
            }
            other => {
                let m: SharingMode = other.parse()?;
                if matches!(m, SharingMode::L1 { .. }) {
                    bail!("write `mode = l1` with a separate `lambda` key");
                }
                (ModelKind::Ensemble(m), vec![])
            }
        };
        if lambdas.is_empty() && md.get::<String>("lambda")?.is_some() {
            bail!("`lambda` only applies to mode l1");
        }
        let head = match value {
            ValueKind::Vanilla => OutputActivation::Sigmoid,
            ValueKind::Wasserstein { .. } => OutputActivation::None,
        };
        let member_width = match md.get::<String>("member_width")?.as_deref() {
            None => MemberWidth::Given,
            Some("auto") => MemberWidth::Auto,
            Some(v) => MemberWidth::Fixed(v.parse().ok().filter(|&h| h > 0).ok_or_else(|| {
                anyhow!("member_width must be `auto` or a positive integer, got `{v}`")
            })?),
        };
        if kind == ModelKind::Single && member_width != MemberWidth::Given {
            bail!("member_width does not apply to mode single");
        }
        let model = ModelSection {
            kind,
            lambdas,
            generator: md
                .get("generator")?
                .unwrap_or_else(MlpSpec::default_generator),
            critic: md
                .get("critic")?
                .unwrap_or_else(|| MlpSpec::default_critic(head)),
            member_width,
        };

        let base_mode = match &model.kind {
            ModelKind::Single => SharingMode::Independent,
            ModelKind::Ensemble(m) => *m,
        };
        let mut train = match value {
            ValueKind::Vanilla => TrainConfig::vanilla(base_mode, epochs, seed),
            ValueKind::Wasserstein { .. } => TrainConfig::wasserstein(base_mode, epochs, seed),
        };
        train.value = value;
        if let Some(v) = tr.get("batch_size")? {
            train.batch_size = v;
        }
        if let Some(v) = tr.get("n_critic")? {
            train.n_critic = v;
        }
        if let Some(v) = tr.get("learning_rate")? {
            train.learning_rate = v;
        }
        if let Some(v) = tr.get("optimizer")? {
            train.optimizer = v;
        }
        if let Some(v) = tr.get("eval_interval")? {
            train.eval_interval = v;
        }
        train.validate()?;

        let ev = section("eval");
        let mut settings = EvalSettings::default();
        let metrics = match ev.list::<String>("metrics")? {
            None => MetricToggles::ALL,
            Some(names) => parse_metrics(&names)?,
        };
        if let Some(v) = ev.get("metric_samples")? {
            settings.metric_samples = v;
        }
        if let Some(v) = ev.get("oos_samples")? {
            settings.oos_samples = v;
        }
        if let Some(v) = ev.get::<f64>("threshold")? {
            settings.threshold = Some(v);
        }
        if let Some(v) = ev.get("k")? {
            settings.k = v;
        }
        if let Some(v) = ev.get("inversion_targets")? {
            settings.inversion_targets = v;
        }
        if let Some(v) = ev.get("inversion_iters")? {
            settings.inversion.iters = v;
        }
        if let Some(v) = ev.get("inversion_restarts")? {
            settings.inversion.restarts = v;
        }
        if let Some(v) = ev.get("inversion_lr")? {
            settings.inversion.lr = v;
        }
        if let Some(v) = ev.get("seed")? {
            settings.seed = v;
        }
        if settings.inversion.iters == 0 || settings.inversion.restarts == 0 {
            bail!("inversion_iters and inversion_restarts must be at least 1");
        }

        let output = section("output")
            .get::<PathBuf>("dir")?
            .unwrap_or_else(|| PathBuf::from("runs/experiment"));

        Ok(ExperimentConfig {
            dataset,
            model,
            train,
            eval: EvalSection { metrics, settings },
            output,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        ExperimentConfig::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Replaces the dataset, training and evaluation seeds.
    pub fn override_seed(&mut self, seed: u64) {
        self.dataset.seed = seed;
        self.train.seed = seed;
        self.eval.settings.seed = seed;
    }

    pub fn k(&self) -> usize {
        self.dataset.components.len()
    }

    /// Member generator and critic specs after applying `member_width`.
    pub fn member_specs(&self) -> Result<(MlpSpec, MlpSpec)> {
        let (g, d) = (&self.model.generator, &self.model.critic);
        match self.model.member_width {
            MemberWidth::Given => Ok((g.clone(), d.clone())),
            MemberWidth::Fixed(h) => Ok((g.with_hidden_width(h)?, d.with_hidden_width(h)?)),
            MemberWidth::Auto => {
                let k = self.k();
                let fit = |spec: &MlpSpec, what: &str| -> Result<MlpSpec> {
                    let h = equivalent_width(spec, k)?.ok_or_else(|| {
                        anyhow!("no {what} hidden width fits {k} members in the single budget")
                    })?;
                    Ok(spec.with_hidden_width(h)?)
                };
                Ok((fit(g, "generator")?, fit(d, "critic")?))
            }
        }
    }

    /// Training configurations, one per run, with the run's directory.
    pub fn runs(&self) -> Vec<(PathBuf, TrainConfig)> {
        if self.model.lambdas.len() > 1 {
            self.model
                .lambdas
                .iter()
                .map(|&lambda| {
                    let mut cfg = self.train.clone();
                    cfg.mode = SharingMode::L1 { lambda };
                    (self.output.join(format!("lambda_{lambda}")), cfg)
                })
                .collect()
        } else {
            vec![(self.output.clone(), self.train.clone())]
        }
    }
}
