//! `inq`: data generation, baseline training, incremental quantization,
//! evaluation, reports and model packing.

mod config;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use inq_core::experiment::{regression_network, synthetic_images};
use inq_core::inq::{resume_inq, InqState, PartitionStrategy, StepMetrics};
use inq_core::io::{
    load_model, parse_idx, save_network, save_quantized, to_csv, write_idx, InqCheckpoint,
    QuantizedModel, StoredModel,
};
use inq_core::nn::{evaluate, evaluate_with, train_with, Accuracy, Dataset, Network};
use inq_core::quant::QuantGrid;
use inq_core::runtime::{compression_report, distribution, shift_forward, to_shift_form};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use config::{read_pairs, DataSource, ExperimentConfig};

const IDX_FILES: [&str; 4] = [
    "train-images.idx",
    "train-labels.idx",
    "test-images.idx",
    "test-labels.idx",
];

#[derive(Parser)]
#[command(name = "inq", version, about = "Incremental network quantization experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` configuration file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Expected bit-width of the quantized weights.
    #[arg(long, global = true)]
    bits: Option<u32>,

    /// Preset name or comma-separated accumulated portions ending in 1.
    #[arg(long, global = true)]
    schedule: Option<String>,

    #[arg(long, global = true, value_parser = ["pruning", "random"])]
    strategy: Option<String>,

    #[arg(long, global = true)]
    epochs_per_step: Option<usize>,

    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured dataset as IDX files into `--out`.
    GenData,
    /// Train the full-precision baseline and save it to `--out`.
    Train,
    /// Quantize a baseline model incrementally and save it to `--out`.
    Inq {
        /// Full-precision model file.
        baseline: PathBuf,
    },
    /// Report test accuracy; quantized models run through shift-add inference.
    Eval {
        model: PathBuf,
        /// Float reference to compare against.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Check that shift-add logits equal the float forward bit-for-bit.
        #[arg(long)]
        cross_check: bool,
    },
    /// Weight distribution, effective bit-widths and compression ratios.
    Stats { model: PathBuf },
    /// Pack a float model whose weights already lie on power-of-two grids.
    Pack { model: PathBuf },
    /// Expand a packed model into a float model file.
    Unpack { model: PathBuf },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut pairs = match &common.config {
        Some(path) => read_pairs(path)?,
        None => Default::default(),
    };
    let mut set = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            pairs.insert(k.to_string(), v);
        }
    };
    set("seed", common.seed.map(|v| v.to_string()));
    set("bits", common.bits.map(|v| v.to_string()));
    set("schedule", common.schedule.clone());
    set("strategy", common.strategy.clone());
    set("epochs_per_step", common.epochs_per_step.map(|v| v.to_string()));
    ExperimentConfig::from_pairs(&pairs)
}

fn out_path(common: &Common) -> Result<&Path> {
    common
        .out
        .as_deref()
        .context("this command needs --out")
}

fn provenance(command: &str, cfg: &ExperimentConfig) -> String {
    format!("command = {command}\n{}", cfg.render())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    match &cfg.data {
        DataSource::Synthetic(kind) => Ok(synthetic_images(
            *kind,
            cfg.classes,
            cfg.train_size,
            cfg.test_size,
            cfg.image_side,
            cfg.seed,
        )?),
        DataSource::Idx(dir) => {
            let read = |name: &str| {
                let p = dir.join(name);
                fs::read(&p).with_context(|| format!("missing dataset file {}", p.display()))
            };
            let train = parse_idx(&read(IDX_FILES[0])?, &read(IDX_FILES[1])?, cfg.classes)?;
            let test = parse_idx(&read(IDX_FILES[2])?, &read(IDX_FILES[3])?, cfg.classes)?;
            Ok((train, test))
        }
    }
}

fn load(path: &Path) -> Result<StoredModel> {
    if !path.is_file() {
        bail!("model file {} not found", path.display());
    }
    Ok(load_model(path)
        .with_context(|| format!("cannot load {}", path.display()))?
        .model)
}

fn load_float(path: &Path) -> Result<Network> {
    match load(path)? {
        StoredModel::Float(net) => Ok(net),
        StoredModel::Quantized(_) => bail!("{} is already quantized", path.display()),
    }
}

fn gen_data(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let dir = out_path(common)?;
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let (train, test) = load_data(&cfg)?;
    write_idx(&train, dir.join(IDX_FILES[0]), dir.join(IDX_FILES[1]))?;
    write_idx(&test, dir.join(IDX_FILES[2]), dir.join(IDX_FILES[3]))?;
    write(&dir.join("provenance.txt"), provenance("gen-data", &cfg))?;
    println!(
        "wrote {} training and {} test samples to {}",
        train.len(),
        test.len(),
        dir.display()
    );
    Ok(())
}

fn train(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let out = out_path(common)?;
    let (train_d, test_d) = load_data(&cfg)?;
    let mut net = regression_network(&train_d, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let history = train_with(
        &mut net,
        &train_d,
        &cfg.sgd,
        cfg.epochs,
        &mut rng,
        None,
        |_, m| {
            println!(
                "epoch {:>3}  loss {:.4}  train top-1 {:.2}%",
                m.epoch + 1,
                m.loss,
                100.0 * m.accuracy
            );
            Ok(())
        },
    )?;
    let acc = evaluate(&net, &test_d)?;
    println!("test top-1 {:.2}%", 100.0 * acc.top1);
    save_network(out, &net, &provenance("train", &cfg))?;
    write(&with_suffix(out, ".metrics.csv"), to_csv(&history)?)?;
    Ok(())
}

fn inq(common: &Common, baseline: &Path) -> Result<()> {
    let cfg = load_config(common)?;
    let out = out_path(common)?;
    let inq_cfg = cfg.inq_config()?;
    let (train_d, test_d) = load_data(&cfg)?;
    let net = load_float(baseline)?;

    let (mut state, mut history) = match &cfg.checkpoint {
        Some(path) if path.is_file() => {
            let (saved, state, history) = InqCheckpoint::load(path)?.into_state()?;
            ensure!(
                saved == inq_cfg,
                "checkpoint {} was written with a different configuration",
                path.display()
            );
            println!("resuming from step {} of {}", state.step(), inq_cfg.schedule.len());
            (state, history)
        }
        _ => (InqState::new(net, inq_cfg.bits)?, Vec::new()),
    };

    let mut done: Vec<StepMetrics> = history.clone();
    let (steps, _) = resume_inq(&mut state, &inq_cfg, &train_d, &test_d, |s, m| {
        println!(
            "step {:>2}  sigma {:<6}  frozen {:.1}%  train loss {:.4}  test top-1 {:.2}%",
            m.step,
            m.sigma,
            100.0 * m.frozen_fraction,
            m.train_loss,
            100.0 * m.eval_top1
        );
        done.push(*m);
        if let Some(path) = &cfg.checkpoint {
            InqCheckpoint::capture(&inq_cfg, s, &done).save(path)?;
        }
        Ok(())
    })?;
    history.extend(steps);
    let model = state.to_quantized_model()?;
    save_quantized(out, &model, &provenance("inq", &cfg))?;
    write(&with_suffix(out, ".steps.csv"), to_csv(&history)?)?;
    Ok(())
}

fn accuracy_of(model: &StoredModel, data: &Dataset, cross_check: bool) -> Result<Accuracy> {
    match model {
        StoredModel::Float(net) => {
            ensure!(!cross_check, "--cross-check needs a quantized model");
            Ok(evaluate(net, data)?)
        }
        StoredModel::Quantized(q) => {
            let shift = to_shift_form(q)?;
            let reference = cross_check.then(|| q.decode()).transpose()?;
            let acc = evaluate_with(data, |batch| {
                let logits = shift_forward(&shift, batch)?;
                if let Some(net) = &reference {
                    if !logits.bit_eq(&net.forward(batch)?) {
                        return Err(inq_core::Error::Shape(
                            "shift-add logits differ from the float forward".into(),
                        ));
                    }
                }
                Ok(logits)
            })?;
            if cross_check {
                println!("cross-check: shift-add logits bit-identical to the float forward");
            }
            Ok(acc)
        }
    }
}

fn bit_width_label(model: &StoredModel) -> String {
    match model {
        StoredModel::Float(_) => "32".into(),
        StoredModel::Quantized(q) => q
            .grids()
            .iter()
            .map(QuantGrid::bits)
            .max()
            .map_or("-".into(), |b| b.to_string()),
    }
}

fn eval(common: &Common, path: &Path, baseline: Option<&Path>, cross_check: bool) -> Result<()> {
    let cfg = load_config(common)?;
    let (_, test_d) = load_data(&cfg)?;
    let model = load(path)?;
    let acc = accuracy_of(&model, &test_d, cross_check)?;
    let err = |a: Option<f64>| a.map_or("-".to_string(), |v| format!("{:.2}%", 100.0 * (1.0 - v)));
    println!("{:<12} {:>9} {:>11} {:>11}", "Model", "Bit-width", "Top-1 error", "Top-5 error");
    let row = |name: &str, model: &StoredModel, acc: &Accuracy| {
        println!(
            "{:<12} {:>9} {:>11} {:>11}",
            name,
            bit_width_label(model),
            err(Some(acc.top1)),
            err(acc.top5)
        );
    };
    if let Some(b) = baseline {
        let base_model = load(b)?;
        let base = accuracy_of(&base_model, &test_d, false)?;
        row("baseline", &base_model, &base);
        row("model", &model, &acc);
        let delta = |m: Option<f64>, b: Option<f64>| match (m, b) {
            (Some(m), Some(b)) => format!("{:+.2}%", 100.0 * (m - b)),
            _ => "-".into(),
        };
        // Positive when the model's error is lower than the baseline's.
        println!(
            "Decrease in top-1/top-5 error: {}/{}",
            delta(Some(acc.top1), Some(base.top1)),
            delta(acc.top5, base.top5)
        );
    } else {
        row("model", &model, &acc);
    }
    Ok(())
}

fn stats(common: &Common, path: &Path) -> Result<()> {
    let StoredModel::Quantized(model) = load(path)? else {
        bail!("{} is not a quantized model", path.display());
    };
    let table = distribution(&model)?;
    let report = compression_report(&model);
    println!("{}", table.render());
    println!("{}", report.render());
    if let Some(dir) = &common.out {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        write(&dir.join("distribution.csv"), table.to_csv()?)?;
        write(&dir.join("compression.csv"), report.to_csv()?)?;
    }
    Ok(())
}

fn pack(common: &Common, path: &Path) -> Result<()> {
    let bits = common.bits.context("pack needs --bits")?;
    let out = out_path(common)?;
    let loaded = load_model(path)?;
    let StoredModel::Float(net) = loaded.model else {
        bail!("{} is already packed", path.display());
    };
    let grids = net
        .params()
        .iter()
        .map(|p| inq_core::quant::build_grid(&p.weights, bits))
        .collect::<inq_core::Result<Vec<_>>>()?;
    let model = QuantizedModel::from_network(&net, &grids)
        .context("weights are not all levels of their power-of-two grid")?;
    save_quantized(out, &model, &loaded.provenance)?;
    Ok(())
}

fn unpack(common: &Common, path: &Path) -> Result<()> {
    let out = out_path(common)?;
    let loaded = load_model(path)?;
    let StoredModel::Quantized(model) = loaded.model else {
        bail!("{} is not a packed model", path.display());
    };
    save_network(out, &model.decode()?, &loaded.provenance)?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let c = &cli.common;
    if let Some(s) = &c.strategy {
        s.parse::<PartitionStrategy>()?;
    }
    match &cli.command {
        Command::GenData => gen_data(c),
        Command::Train => train(c),
        Command::Inq { baseline } => inq(c, baseline),
        Command::Eval {
            model,
            baseline,
            cross_check,
        } => eval(c, model, baseline.as_deref(), *cross_check),
        Command::Stats { model } => stats(c, model),
        Command::Pack { model } => pack(c, model),
        Command::Unpack { model } => unpack(c, model),
    }
}
