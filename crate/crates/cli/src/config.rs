//! Experiment configuration: a `key = value` file with flag overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use inq_core::experiment;
use inq_core::inq::{default_epochs_per_step, InqConfig, InqSchedule, PartitionStrategy};
use inq_core::io::SynthKind;
use inq_core::nn::{LrStep, SgdConfig};

/// Where samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SynthKind),
    /// A directory holding `train-images.idx`, `train-labels.idx`,
    /// `test-images.idx` and `test-labels.idx`.
    Idx(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSource,
    pub classes: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub image_side: usize,
    pub epochs: usize,
    pub sgd: SgdConfig,
    pub bits: u32,
    pub schedule: String,
    pub strategy: PartitionStrategy,
    pub epochs_per_step: usize,
    pub retrain_sgd: SgdConfig,
    pub checkpoint: Option<PathBuf>,
}

const BASE_DECAY: f64 = 0.1;
const RETRAIN_DECAY: f64 = 0.2;

const KEYS: &[&str] = &[
    "seed",
    "dataset",
    "data_dir",
    "classes",
    "train_size",
    "test_size",
    "image_side",
    "epochs",
    "learning_rate",
    "momentum",
    "weight_decay",
    "batch_size",
    "lr_decay_epochs",
    "bits",
    "schedule",
    "strategy",
    "epochs_per_step",
    "retrain_learning_rate",
    "retrain_lr_decay_epochs",
    "checkpoint",
];

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected key = value", n + 1))?;
        let k = k.trim().replace('-', "_");
        if !KEYS.contains(&k.as_str()) {
            bail!("config line {}: unknown key {k:?}", n + 1);
        }
        out.insert(k, v.trim().to_string());
    }
    Ok(out)
}

pub fn read_pairs(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    parse_pairs(&text).with_context(|| format!("in config file {}", path.display()))
}

fn field<T: FromStr>(pairs: &BTreeMap<String, String>, key: &str, default: T) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    match pairs.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|e| anyhow!("invalid value {v:?} for {key}: {e}")),
    }
}

/// `a,b,c` epoch list as compounding decays by `factor`.
fn decay_steps(
    pairs: &BTreeMap<String, String>,
    key: &str,
    default: &[usize],
    factor: f64,
) -> Result<Vec<LrStep>> {
    let epochs: Vec<usize> = match pairs.get(key) {
        None => default.to_vec(),
        Some(v) if v.trim().is_empty() => Vec::new(),
        Some(v) => v
            .split(',')
            .map(|e| {
                e.trim()
                    .parse()
                    .map_err(|_| anyhow!("invalid value {v:?} for {key}: expected epoch list"))
            })
            .collect::<Result<_>>()?,
    };
    if epochs.windows(2).any(|w| w[0] >= w[1]) {
        bail!("invalid value for {key}: epochs must increase");
    }
    Ok(epochs
        .iter()
        .enumerate()
        .map(|(i, &epoch)| LrStep {
            epoch,
            multiplier: 1.0 / (1.0 / factor).powi(i as i32 + 1),
        })
        .collect())
}

impl ExperimentConfig {
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let data = match pairs.get("dataset").map(String::as_str).unwrap_or("spirals") {
            "idx" => DataSource::Idx(
                pairs
                    .get("data_dir")
                    .map(PathBuf::from)
                    .ok_or_else(|| anyhow!("dataset = idx needs data_dir"))?,
            ),
            kind => DataSource::Synthetic(
                kind.parse()
                    .map_err(|_| anyhow!("invalid value {kind:?} for dataset: expected spirals, blobs or idx"))?,
            ),
        };
        let base = experiment::baseline_sgd();
        let epochs = field(pairs, "epochs", experiment::BASELINE_EPOCHS)?;
        let default_decay: Vec<usize> = base.lr_schedule.iter().map(|s| s.epoch).collect();
        let sgd = SgdConfig {
            learning_rate: field(pairs, "learning_rate", base.learning_rate)?,
            momentum: field(pairs, "momentum", base.momentum)?,
            weight_decay: field(pairs, "weight_decay", base.weight_decay)?,
            batch_size: field(pairs, "batch_size", base.batch_size)?,
            lr_schedule: decay_steps(pairs, "lr_decay_epochs", &default_decay, BASE_DECAY)?,
        };
        let bits = field(pairs, "bits", 5u32)?;
        let retrain = experiment::retrain_sgd();
        let retrain_decay: Vec<usize> = retrain.lr_schedule.iter().map(|s| s.epoch).collect();
        let retrain_sgd = SgdConfig {
            learning_rate: field(pairs, "retrain_learning_rate", retrain.learning_rate)?,
            lr_schedule: decay_steps(
                pairs,
                "retrain_lr_decay_epochs",
                &retrain_decay,
                RETRAIN_DECAY,
            )?,
            ..sgd.clone()
        };
        let cfg = Self {
            seed: field(pairs, "seed", 1)?,
            data,
            classes: field(pairs, "classes", experiment::CLASSES)?,
            train_size: field(pairs, "train_size", experiment::TRAIN_SIZE)?,
            test_size: field(pairs, "test_size", experiment::TEST_SIZE)?,
            image_side: field(pairs, "image_side", experiment::IMAGE_SIDE)?,
            epochs,
            sgd,
            bits,
            schedule: pairs
                .get("schedule")
                .cloned()
                .unwrap_or_else(|| "resnet18-5bit".into()),
            strategy: field(pairs, "strategy", PartitionStrategy::Pruning)?,
            epochs_per_step: field(pairs, "epochs_per_step", default_epochs_per_step(bits))?,
            retrain_sgd,
            checkpoint: pairs.get("checkpoint").map(PathBuf::from),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.classes > 256 {
            bail!("invalid value {} for classes: must be in 2..=256", self.classes);
        }
        if self.train_size < self.classes || self.test_size == 0 {
            bail!("invalid train_size/test_size: need at least one training sample per class and one test sample");
        }
        if self.image_side < 4 {
            bail!("invalid value {} for image_side: must be at least 4", self.image_side);
        }
        if self.epochs == 0 {
            bail!("invalid value 0 for epochs");
        }
        self.sgd.validate().context("invalid solver settings")?;
        self.retrain_sgd
            .validate()
            .context("invalid re-training solver settings")?;
        if !(2..=inq_core::quant::MAX_BITS).contains(&self.bits) {
            bail!(
                "invalid value {} for bits: must be in 2..={}",
                self.bits,
                inq_core::quant::MAX_BITS
            );
        }
        InqSchedule::parse(&self.schedule)
            .map_err(|e| anyhow!("invalid value {:?} for schedule: {e}", self.schedule))?;
        Ok(())
    }

    pub fn inq_config(&self) -> Result<InqConfig> {
        Ok(InqConfig {
            bits: self.bits,
            schedule: InqSchedule::parse(&self.schedule)?,
            strategy: self.strategy,
            epochs_per_step: self.epochs_per_step,
            sgd: self.retrain_sgd.clone(),
            seed: self.seed,
        })
    }

    /// The full configuration as `key = value` lines, for provenance.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("seed", self.seed.to_string());
        match &self.data {
            DataSource::Synthetic(kind) => put("dataset", kind.to_string()),
            DataSource::Idx(dir) => {
                put("dataset", "idx".into());
                put("data_dir", dir.display().to_string());
            }
        }
        put("classes", self.classes.to_string());
        put("train_size", self.train_size.to_string());
        put("test_size", self.test_size.to_string());
        put("image_side", self.image_side.to_string());
        put("epochs", self.epochs.to_string());
        put("learning_rate", self.sgd.learning_rate.to_string());
        put("momentum", self.sgd.momentum.to_string());
        put("weight_decay", self.sgd.weight_decay.to_string());
        put("batch_size", self.sgd.batch_size.to_string());
        let epochs = |steps: &[LrStep]| {
            steps
                .iter()
                .map(|s| s.epoch.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        put("lr_decay_epochs", epochs(&self.sgd.lr_schedule));
        put("bits", self.bits.to_string());
        put("schedule", self.schedule.clone());
        put("strategy", self.strategy.to_string());
        put("epochs_per_step", self.epochs_per_step.to_string());
        put(
            "retrain_learning_rate",
            self.retrain_sgd.learning_rate.to_string(),
        );
        put(
            "retrain_lr_decay_epochs",
            epochs(&self.retrain_sgd.lr_schedule),
        );
        if let Some(c) = &self.checkpoint {
            put("checkpoint", c.display().to_string());
        }
        s
    }
}
