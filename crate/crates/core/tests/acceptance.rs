//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p inq-core --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{grad_case, grad_check, random_quantized_network, GradKind};
use inq_core::experiment::{
    baseline_sgd, regression_data, regression_network, retrain_sgd, BASELINE_EPOCHS,
};
use inq_core::inq::{
    default_epochs_per_step, preset, resume_inq, InqConfig, InqSchedule, InqState,
    PartitionStrategy, StepMetrics, StepReport,
};
use inq_core::io::{
    decode_layer, decode_model, encode_layer, encode_quantized, encoded_bits, gen_synthetic,
    rasterize, to_csv, QuantizedModel, StoredModel, SynthKind,
};
use inq_core::mask::PartitionMask;
use inq_core::nn::{evaluate, train, Dataset, Network, SgdConfig};
use inq_core::quant::{build_grid, pow2, quantize_value, QuantGrid};
use inq_core::runtime::{
    distribution, effective_bitwidth, shift_forward, to_shift_form, LayerCompression,
};
use inq_core::Tensor;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SEED: u64 = 1;
const STANDARD: [f64; 4] = [0.5, 0.75, 0.875, 1.0];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn report(id: usize, name: &str, o: &Outcome) {
    println!(
        "criterion {id:>2} [{name}]: {} - {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
}

fn pp(a: f64) -> String {
    format!("{:.2}%", 100.0 * a)
}

// Criterion 1.

fn quantizer_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let normal = Normal::new(0.0, 0.05).unwrap();
    let mut failures = Vec::new();
    for b in 2..=5u32 {
        let ws: Vec<f64> = (0..100_000).map(|_| normal.sample(&mut rng)).collect();
        let g = build_grid(&Tensor::from_vec(ws.clone()), b).unwrap();
        if g.levels().len() != (1 << (b - 1)) + 1 {
            failures.push(format!("b={b}: arity {}", g.levels().len()));
        }
        let lowest = pow2(g.n2() - 1);
        let ladder = 3.0 * pow2(g.n2() - 2);
        for &w in &ws {
            let q = quantize_value(w, &g).unwrap();
            let ok_member = g.contains(q);
            let ok_sign = q == 0.0 || q.signum() == w.signum();
            let ok_idem = quantize_value(q, &g).unwrap().to_bits() == q.to_bits();
            let err = (q - w).abs();
            let m = w.abs();
            let ok_err = if m >= ladder {
                3.0 * err <= m
            } else if m >= lowest {
                err <= m
            } else {
                q == 0.0
            };
            if !(ok_member && ok_sign && ok_idem && ok_err) {
                failures.push(format!("b={b}: w={w:e} -> {q:e}"));
                break;
            }
        }
    }
    let g3 = QuantGrid::new(3, -1).unwrap();
    if g3.n2() != -2 || g3.levels() != [-0.5, -0.25, 0.0, 0.25, 0.5] {
        failures.push("b=3, n1=-1 grid".into());
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(5);
    outcome(
        pass,
        format!(
            "4 x 10^5 weights, {} violations, {:.2}s (limit 5s){}",
            failures.len(),
            elapsed.as_secs_f64(),
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

// Criterion 2.

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst = Vec::new();
    for kind in [
        GradKind::Dense,
        GradKind::Conv2d,
        GradKind::MaxPool,
        GradKind::Relu,
    ] {
        let w = (0..25)
            .map(|s| grad_check(&grad_case(kind, 1000 + s), 1e-5))
            .fold(0.0, f64::max);
        worst.push((kind, w));
    }
    let elapsed = start.elapsed();
    let pass = worst.iter().all(|&(_, w)| w <= 1e-5) && elapsed < Duration::from_secs(30);
    let parts: Vec<String> = worst.iter().map(|(k, w)| format!("{k:?} {w:.1e}")).collect();
    outcome(
        pass,
        format!(
            "25 instances per kind, max relative error {} (limit 1e-5), {:.2}s (limit 30s)",
            parts.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

// Shared regression experiment.

struct Run {
    bits: u32,
    strategy: PartitionStrategy,
    seed: u64,
    steps: Vec<StepMetrics>,
    reports: Vec<StepReport>,
    /// Frozen entries after each step: `(masks, network)`.
    snapshots: Vec<(PartitionMask, Network)>,
    network: Network,
    model: QuantizedModel,
    seconds: f64,
}

impl Run {
    fn final_top1(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.eval_top1)
    }
}

fn inq_run(
    base: &Network,
    bits: u32,
    schedule: InqSchedule,
    strategy: PartitionStrategy,
    epochs: usize,
    seed: u64,
    train_d: &Dataset,
    test_d: &Dataset,
) -> Run {
    let start = Instant::now();
    let cfg = InqConfig {
        bits,
        schedule,
        strategy,
        epochs_per_step: epochs,
        sgd: retrain_sgd(),
        seed,
    };
    let mut state = InqState::new(base.clone(), bits).unwrap();
    let mut snapshots = Vec::new();
    let (steps, reports) = resume_inq(&mut state, &cfg, train_d, test_d, |s, m| {
        eprintln!(
            "  b={bits} {strategy} seed={seed} step {} sigma={} top1={}",
            m.step,
            m.sigma,
            pp(m.eval_top1)
        );
        snapshots.push((s.masks().clone(), s.network().clone()));
        Ok(())
    })
    .unwrap();
    Run {
        bits,
        strategy,
        seed,
        steps,
        reports,
        snapshots,
        model: state.to_quantized_model().unwrap(),
        network: state.into_network(),
        seconds: start.elapsed().as_secs_f64(),
    }
}

struct Experiment {
    baseline_top1: f64,
    baseline_seconds: f64,
    mnist: bool,
    /// b = 5, 4, 3 on the standard schedule and b = 2 on the ten-step one,
    /// all with pruning partition and seed 1.
    ladder: Vec<Run>,
    /// Extra b = 5 runs for the strategy comparison.
    strategy_runs: Vec<Run>,
    one_shot: Run,
}

fn run_experiment() -> Experiment {
    let (train_d, test_d, mnist) = regression_data(SEED).unwrap();
    eprintln!(
        "regression data: {} ({} train, {} test)",
        if mnist { "MNIST" } else { "spirals" },
        train_d.len(),
        test_d.len()
    );
    let start = Instant::now();
    let mut base = regression_network(&train_d, SEED).unwrap();
    let hist = train(&mut base, &train_d, &baseline_sgd(), BASELINE_EPOCHS, SEED).unwrap();
    let baseline_top1 = evaluate(&base, &test_d).unwrap().top1;
    let baseline_seconds = start.elapsed().as_secs_f64();
    eprintln!(
        "baseline: {BASELINE_EPOCHS} epochs, final train loss {:.4}, test top-1 {} ({:.0}s)",
        hist.last().unwrap().loss,
        pp(baseline_top1),
        baseline_seconds
    );

    let standard = InqSchedule::new(STANDARD.to_vec()).unwrap();
    let mut ladder = Vec::new();
    for bits in [5, 4, 3] {
        ladder.push(inq_run(
            &base,
            bits,
            standard.clone(),
            PartitionStrategy::Pruning,
            default_epochs_per_step(bits),
            SEED,
            &train_d,
            &test_d,
        ));
    }
    ladder.push(inq_run(
        &base,
        2,
        preset("2bit").unwrap(),
        PartitionStrategy::Pruning,
        default_epochs_per_step(2),
        SEED,
        &train_d,
        &test_d,
    ));

    let mut strategy_runs = Vec::new();
    for seed in [2, 3] {
        strategy_runs.push(inq_run(
            &base,
            5,
            standard.clone(),
            PartitionStrategy::Pruning,
            default_epochs_per_step(5),
            seed,
            &train_d,
            &test_d,
        ));
    }
    for seed in [1, 2, 3] {
        strategy_runs.push(inq_run(
            &base,
            5,
            standard.clone(),
            PartitionStrategy::Random,
            default_epochs_per_step(5),
            seed,
            &train_d,
            &test_d,
        ));
    }

    let one_shot = inq_run(
        &base,
        5,
        InqSchedule::new(vec![1.0]).unwrap(),
        PartitionStrategy::Pruning,
        0,
        SEED,
        &train_d,
        &test_d,
    );

    Experiment {
        baseline_top1,
        baseline_seconds,
        mnist,
        ladder,
        strategy_runs,
        one_shot,
    }
}

// Criterion 3.

fn frozen_immutability(exp: &Experiment) -> Outcome {
    let mut epochs = 0;
    let mut broken = Vec::new();
    let runs = exp.ladder.iter().chain(&exp.strategy_runs);
    let mut count = 0;
    for run in runs {
        count += 1;
        for (step, r) in run.reports.iter().enumerate() {
            epochs += r.frozen_checksums.len().saturating_sub(1);
            if r.frozen_checksums.windows(2).any(|w| w[0] != w[1]) {
                broken.push(format!("b={} seed={} step {}", run.bits, run.seed, step + 1));
            }
        }
        // Entries frozen at any step keep their exact value to the end.
        for (step, (masks, net)) in run.snapshots.iter().enumerate() {
            for (l, m) in masks.layers().iter().enumerate() {
                let then = net.params()[l].weights.data();
                let now = run.network.params()[l].weights.data();
                if m
                    .frozen_indices()
                    .into_iter()
                    .any(|i| then[i].to_bits() != now[i].to_bits())
                {
                    broken.push(format!(
                        "b={} seed={} layer {l} after step {}",
                        run.bits,
                        run.seed,
                        step + 1
                    ));
                }
            }
        }
    }
    outcome(
        broken.is_empty(),
        format!(
            "{count} full runs, checksum compared after {epochs} re-training epochs{}",
            broken
                .first()
                .map(|b| format!("; changed: {b}"))
                .unwrap_or_default()
        ),
    )
}

// Criterion 4.

fn losslessness(exp: &Experiment) -> Outcome {
    let limits = [(5, 0.005), (4, 0.005), (3, 0.010), (2, 0.030)];
    let mut pass = true;
    let mut parts = vec![format!(
        "baseline {} on {}",
        pp(exp.baseline_top1),
        if exp.mnist { "MNIST" } else { "spirals" }
    )];
    for (run, &(bits, tol)) in exp.ladder.iter().zip(&limits) {
        assert_eq!(run.bits, bits);
        let diff = run.final_top1() - exp.baseline_top1;
        let ok = diff >= -tol - 1e-12;
        pass &= ok;
        parts.push(format!(
            "b={bits} {} ({:+.2}pp, limit -{:.1}pp{})",
            pp(run.final_top1()),
            100.0 * diff,
            100.0 * tol,
            if ok { "" } else { " MISSED" }
        ));
    }
    let seconds = exp.baseline_seconds + exp.ladder.iter().map(|r| r.seconds).sum::<f64>();
    let in_time = seconds <= 1800.0;
    pass &= in_time;
    parts.push(format!("{seconds:.0}s (limit 1800s)"));
    outcome(pass, parts.join(", "))
}

// Criterion 5.

fn strategy_ordering(exp: &Experiment) -> Outcome {
    let five = &exp.ladder[0];
    let mut pruning = vec![five.final_top1()];
    let mut random = Vec::new();
    for r in &exp.strategy_runs {
        match r.strategy {
            PartitionStrategy::Pruning => pruning.push(r.final_top1()),
            PartitionStrategy::Random => random.push(r.final_top1()),
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (p, r) = (mean(&pruning), mean(&random));
    outcome(
        p >= r,
        format!(
            "b=5 over seeds 1-3: pruning mean {} vs random mean {}",
            pp(p),
            pp(r)
        ),
    )
}

// Criterion 6.

fn one_shot_vs_incremental(exp: &Experiment) -> Outcome {
    let one = exp.one_shot.final_top1();
    let inc = exp.ladder[0].final_top1();
    outcome(
        one <= inc,
        format!(
            "b=5 one-shot (schedule {{1}}, no re-training) {} vs incremental {}",
            pp(one),
            pp(inc)
        ),
    )
}

// Criterion 7.

fn codec_checks() -> Outcome {
    let mut problems = Vec::new();
    let mut check = |w: &Tensor, g: &QuantGrid, what: &str| {
        let s = encode_layer(w, g).unwrap();
        let z = w.data().iter().filter(|&&v| v == 0.0).count();
        let expect = z + (w.len() - z) * g.bits() as usize;
        if s.bit_len != expect || encoded_bits(z, w.len(), g.bits()) != expect {
            problems.push(format!("{what}: {} bits, expected {expect}", s.bit_len));
        }
        match decode_layer(&s.bytes, g, w.len()) {
            Ok(back) if back.bit_eq(w) => {}
            _ => problems.push(format!("{what}: round trip differs")),
        }
    };
    let mut exhaustive = 0;
    for b in [2u32, 3] {
        for n1 in [-3, -1, 0, 2] {
            let g = QuantGrid::new(b, n1).unwrap();
            let levels = g.levels();
            let k = levels.len();
            for &v in levels {
                check(&Tensor::from_vec(vec![v]), &g, "single level");
            }
            // Every ordered pair and triple of levels.
            for code in 0..k * k * k {
                let t = vec![levels[code % k], levels[code / k % k], levels[code / (k * k)]];
                check(&Tensor::from_vec(t[..2].to_vec()), &g, "pair");
                check(&Tensor::from_vec(t), &g, "triple");
                exhaustive += 2;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for n1 in [-6, -1, 1] {
        let g = QuantGrid::new(5, n1).unwrap();
        let data = (0..10_000)
            .map(|_| *g.levels().choose(&mut rng).unwrap())
            .collect();
        check(&Tensor::from_vec(data), &g, "random b=5");
    }

    let (net, grids, _) = random_quantized_network(SEED, 5);
    let model = QuantizedModel::from_network(&net, &grids).unwrap();
    let first = encode_quantized(&model, "acceptance");
    let resaved = match decode_model(&first).unwrap().model {
        StoredModel::Quantized(q) => encode_quantized(&q, "acceptance"),
        StoredModel::Float(_) => Vec::new(),
    };
    if resaved != first {
        problems.push("re-saved container differs".into());
    }
    outcome(
        problems.is_empty(),
        format!(
            "{exhaustive} exhaustive b=2/3 sequences, 3 x 10^4 random b=5 weights, size formula and re-save{}",
            problems
                .first()
                .map(|p| format!("; {p}"))
                .unwrap_or_default()
        ),
    )
}

// Criterion 8.

fn shift_equivalence() -> Outcome {
    let mut mismatches = 0;
    for seed in 0..100 {
        let (net, grids, batch) = random_quantized_network(10_000 + seed, 2 + (seed % 4) as u32);
        let model = QuantizedModel::from_network(&net, &grids).unwrap();
        let want = model.decode().unwrap().forward(&batch).unwrap();
        let got = shift_forward(&to_shift_form(&model).unwrap(), &batch).unwrap();
        if !got.bit_eq(&want) {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("100 random models and batches, {mismatches} not bit-identical"),
    )
}

// Criterion 9.

fn analysis_checks(exp: &Experiment) -> Outcome {
    let mut problems = Vec::new();
    let mut widths = Vec::new();
    for run in exp.ladder.iter().chain(&exp.strategy_runs) {
        let table = distribution(&run.model).unwrap();
        for l in 0..table.layers.len() {
            let sum = table.percent_sum(l);
            if (sum - 100.0).abs() > 0.01 {
                problems.push(format!("b={} {}: sum {sum}", run.bits, table.layers[l]));
            }
            if table.bitwidths[l] > run.bits {
                problems.push(format!(
                    "b={} {}: bit-width {}",
                    run.bits, table.layers[l], table.bitwidths[l]
                ));
            }
        }
        for p in run.network.params() {
            if effective_bitwidth(p.weights.data()) > run.bits {
                problems.push(format!("b={} direct bit-width", run.bits));
            }
        }
        if run.seed == SEED {
            widths.push(format!("b={}: {:?}", run.bits, table.bitwidths));
        }
    }
    let no_zeros = LayerCompression::new("x", 1000, 0, 5);
    let half = LayerCompression::new("x", 1000, 500, 5);
    if no_zeros.fixed_ratio != 6.4 || no_zeros.variable_ratio != 6.4 {
        problems.push(format!("no zeros: {}", no_zeros.variable_ratio));
    }
    if half.variable_ratio != 32.0 / 3.0 {
        problems.push(format!("half zeros: {}", half.variable_ratio));
    }
    outcome(
        problems.is_empty(),
        format!(
            "sums within 0.01, effective bit-widths {}; ratios 6.4x and 32/3x exact{}",
            widths.join(" "),
            problems
                .first()
                .map(|p| format!("; {p}"))
                .unwrap_or_default()
        ),
    )
}

// Criterion 10.

fn end_to_end(seed: u64) -> (Vec<u8>, Vec<u8>, String, String) {
    let pts = gen_synthetic(SynthKind::Spirals, 10, 600, seed).unwrap();
    let data = rasterize(&pts, 16, 1.15, 1.0).unwrap();
    let (train_d, test_d) = (data.slice(0, 450), data.slice(450, 600));
    let mut net = regression_network(&train_d, seed).unwrap();
    let cfg = SgdConfig {
        lr_schedule: Vec::new(),
        ..baseline_sgd()
    };
    let hist = train(&mut net, &train_d, &cfg, 2, seed).unwrap();
    let run = inq_run(
        &net,
        4,
        InqSchedule::new(STANDARD.to_vec()).unwrap(),
        PartitionStrategy::Random,
        1,
        seed,
        &train_d,
        &test_d,
    );
    (
        inq_core::io::encode_network(&net, "determinism"),
        encode_quantized(&run.model, "determinism"),
        to_csv(&hist).unwrap(),
        to_csv(&run.steps).unwrap(),
    )
}

fn determinism() -> Outcome {
    let a = end_to_end(7);
    let b = end_to_end(7);
    let same = a == b;
    outcome(
        same,
        format!(
            "two runs: float model {} bytes, quantized model {} bytes, metric logs {} and {} bytes, {}",
            a.0.len(),
            a.1.len(),
            a.2.len(),
            a.3.len(),
            if same { "byte-identical" } else { "DIFFER" }
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut passed = Vec::new();
    let mut record = |id: usize, name: &str, o: Outcome| {
        report(id, name, &o);
        passed.push((id, o.pass));
    };
    record(1, "quantizer", quantizer_suite());
    record(2, "gradient oracle", gradient_oracle());
    eprintln!("running the regression experiment...");
    let exp = run_experiment();
    record(3, "frozen weights", frozen_immutability(&exp));
    record(4, "losslessness trend", losslessness(&exp));
    record(5, "strategy ordering", strategy_ordering(&exp));
    record(6, "one-shot vs incremental", one_shot_vs_incremental(&exp));
    record(7, "codec", codec_checks());
    record(8, "shift-add equivalence", shift_equivalence());
    record(9, "analysis", analysis_checks(&exp));
    record(10, "determinism", determinism());

    let failed: Vec<usize> = passed.iter().filter(|p| !p.1).map(|p| p.0).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0}s",
        passed.len() - failed.len(),
        passed.len(),
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
