//! `advaug` — train, evaluate, preview, gradient-check, and sweep the
//! consistency-training engine from the command line.
//!
//! Exit codes: 0 success, 1 configuration/usage error, 2 runtime failure.

mod config;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use advaug_core::augment::{augment_batch, AugmentPolicy, OpSet};
use advaug_core::data::{Corruption, DomainTag, ALL_CORRUPTIONS};
use advaug_core::gradcheck;
use advaug_core::losses::Mode;
use advaug_core::model::Checkpoint;
use advaug_core::rng::{stream_rng, Stream};
use advaug_core::trainer::{self, metrics_csv, Strategy};
use advaug_core::{Error, Result};

use config::{parse_data_spec, parse_grid, parse_seeds, Settings};

#[derive(Parser)]
#[command(
    name = "advaug",
    version,
    about = "Consistency training with random and adversarial image transformations",
    after_help = "Exit codes: 0 success, 1 configuration error, 2 runtime failure."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Domain adaptation: labeled sources plus the unlabeled target domain
    TrainDa(TrainArgs),
    /// Domain generalization: sources only; the target is evaluation-only
    TrainDg(TrainArgs),
    /// Accuracy of a checkpoint per domain, optionally under corruption
    Eval(EvalArgs),
    /// Write (original, transformed) PNG pairs for a strategy
    AugmentPreview(PreviewArgs),
    /// Finite-difference verification of every differentiable op
    Gradcheck(GradcheckArgs),
    /// Grid sweep over the consistency/adversarial loss weights
    Sweep(SweepArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// key = value config file (all keys optional; flags override)
    #[arg(long)]
    config: Option<PathBuf>,
    /// none | rnd-all | rnd-color | rnd-geo | adv-stn | adv-stn-color
    #[arg(long)]
    strategy: Option<String>,
    /// Comma-separated run seeds, e.g. 0,1,2
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory for report, metrics, and checkpoints
    #[arg(long)]
    out: Option<PathBuf>,
    /// Consistency loss weight
    #[arg(long)]
    lambda_c: Option<f64>,
    /// Entropy loss weight (adaptation mode only)
    #[arg(long)]
    lambda_e: Option<f64>,
    /// Adversarial loss weight
    #[arg(long)]
    lambda_t: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Dataset spec, e.g. synthetic:samples=40,classes=7,size=16,channels=3,seed=17
    #[arg(long)]
    data: Option<String>,
    /// Domain name treated as target
    #[arg(long)]
    target_domain: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset spec (same grammar as train --data)
    #[arg(long)]
    data: String,
    /// kind:severity, e.g. gaussian-noise:5 or all:5
    #[arg(long)]
    corrupt: Option<String>,
    /// Seed for the corruption noise draws
    #[arg(long, default_value_t = 99)]
    seed: u64,
}

#[derive(Args)]
struct PreviewArgs {
    /// none | rnd-all | rnd-color | rnd-geo | adv-stn | adv-stn-color
    #[arg(long)]
    strategy: String,
    /// Number of (original, transformed) pairs
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Checkpoint with a localization net (required for adv-stn strategies)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Dataset spec supplying the originals
    #[arg(long, default_value = "synthetic:samples=40,classes=7,size=16,channels=3,seed=17")]
    data: String,
    #[arg(long, default_value = "preview")]
    out: PathBuf,
    /// Ops per image in the random strategies
    #[arg(long, default_value_t = 2)]
    n_aug: usize,
    /// Shared magnitude in [0,10]
    #[arg(long, default_value_t = 9.0)]
    m_aug: f64,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Only run ops whose name contains this substring
    #[arg(long)]
    ops: Option<String>,
    /// Fault-injection fixture: corrupt this op's analytic gradient
    #[arg(long)]
    perturb_op: Option<String>,
    #[arg(long, default_value_t = 5)]
    cases: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated λ_c grid
    #[arg(long, default_value = "0,1")]
    grid_c: String,
    /// Comma-separated λ_t grid
    #[arg(long, default_value = "0,0.1")]
    grid_t: String,
    /// adaptation | generalization mode for the swept runs
    #[arg(long, default_value = "da")]
    mode: String,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    target_domain: Option<String>,
}

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    };
    std::process::exit(code);
}

/// Configuration and usage problems exit 1; runtime failures exit 2.
fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArg(_) | Error::Data(_) => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::TrainDa(a) => cmd_train(Mode::Da, a),
        Cmd::TrainDg(a) => cmd_train(Mode::Dg, a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::AugmentPreview(a) => cmd_preview(a),
        Cmd::Gradcheck(a) => cmd_gradcheck(a),
        Cmd::Sweep(a) => cmd_sweep(a),
    }
}

fn load_settings(config: Option<&PathBuf>) -> Result<Settings> {
    match config {
        Some(p) => Settings::load(p),
        None => Ok(Settings::default()),
    }
}

fn write_out(path: &PathBuf, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

fn cmd_train(mode: Mode, a: TrainArgs) -> Result<i32> {
    let mut s = load_settings(a.config.as_ref())?;
    if let Some(v) = a.strategy.as_deref() {
        s.strategy = Strategy::parse(v)?;
    }
    if let Some(v) = a.seeds.as_deref() {
        s.seeds = parse_seeds(v)?;
    }
    if let Some(v) = a.out {
        s.out = v;
    }
    if let Some(v) = a.lambda_c {
        s.lambda_c = v;
    }
    if let Some(v) = a.lambda_e {
        s.lambda_e = v;
    }
    if let Some(v) = a.lambda_t {
        s.lambda_t = v;
    }
    if let Some(v) = a.epochs {
        s.epochs = v;
    }
    if let Some(v) = a.lr {
        s.lr = v;
    }
    if let Some(v) = a.data {
        s.data = v;
    }
    if let Some(v) = a.target_domain {
        s.target_domain = v;
    }

    let cfg = s.train_config(mode);
    cfg.validate()?;
    let datasets = parse_data_spec(&s.data)?.load()?;

    let t0 = Instant::now();
    let outcome = trainer::train(&cfg, &datasets)?;
    eprintln!("trained {} seeds in {:.1}s", cfg.seeds.len(), t0.elapsed().as_secs_f64());

    std::fs::create_dir_all(&s.out)?;
    write_out(&s.out.join("config.resolved"), &s.resolved(Some(mode)))?;
    let json = serde_json::to_string_pretty(&outcome.report)
        .map_err(|e| Error::Data(format!("report serialization failed: {e}")))?;
    write_out(&s.out.join("report.json"), &json)?;
    for (run, ck) in outcome.report.runs.iter().zip(&outcome.checkpoints) {
        write_out(&s.out.join(format!("metrics_seed{}.csv", run.seed)), &metrics_csv(run))?;
        ck.save(&s.out.join(format!("checkpoint_seed{}.ckpt", run.seed)))?;
    }
    for run in &outcome.report.runs {
        println!(
            "seed {}: source {:.2} target {:.2}",
            run.seed, run.source_holdout_acc, run.target_acc
        );
    }
    println!(
        "{} {}: mean source {:.2} mean target {:.2} -> {}",
        outcome.report.mode,
        outcome.report.strategy,
        outcome.report.mean_source_acc,
        outcome.report.mean_target_acc,
        s.out.display()
    );
    Ok(0)
}

fn cmd_eval(a: EvalArgs) -> Result<i32> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let datasets = parse_data_spec(&a.data)?.load()?;
    for d in &datasets {
        let img = &d.images[0];
        if img.channels != ck.classifier.channels || img.height != ck.classifier.size {
            return Err(Error::Config(format!(
                "checkpoint expects {}x{}x{} inputs but domain {} has {}x{}x{}",
                ck.classifier.channels,
                ck.classifier.size,
                ck.classifier.size,
                d.domain,
                img.channels,
                img.height,
                img.width,
            )));
        }
    }

    match a.corrupt.as_deref() {
        None => {
            println!("domain,accuracy");
            for d in &datasets {
                println!("{},{}", d.domain, trainer::evaluate(&ck.classifier, d)?);
            }
        }
        Some(spec) => {
            let (kind_s, sev_s) = spec.split_once(':').ok_or_else(|| {
                Error::InvalidArg(format!("bad --corrupt {spec:?} (want kind:severity)"))
            })?;
            let severity: u8 = sev_s
                .parse()
                .map_err(|_| Error::InvalidArg(format!("bad severity {sev_s:?} (want 1..=5)")))?;
            let kinds: Vec<Corruption> = if kind_s == "all" {
                ALL_CORRUPTIONS.to_vec()
            } else {
                vec![Corruption::parse(kind_s)?]
            };
            println!("corruption,severity,error");
            for kind in kinds {
                let mut correct_weighted = 0.0f64;
                let mut total = 0usize;
                for d in &datasets {
                    let acc = trainer::evaluate_corrupted(&ck.classifier, d, kind, severity, a.seed)?;
                    correct_weighted += acc / 100.0 * d.len() as f64;
                    total += d.len();
                }
                let err = 100.0 * (1.0 - correct_weighted / total as f64);
                println!("{},{},{}", kind.name(), severity, err);
            }
        }
    }
    Ok(0)
}

fn cmd_preview(a: PreviewArgs) -> Result<i32> {
    let strategy = Strategy::parse(&a.strategy)?;
    if a.n == 0 {
        return Err(Error::Config("--n must be at least 1".into()));
    }
    let datasets = parse_data_spec(&a.data)?.load()?;
    let pool = &datasets[0];
    if pool.is_empty() {
        return Err(Error::Data("preview dataset is empty".into()));
    }
    // evenly spaced indices give class variety (samples are class-grouped)
    let idxs: Vec<usize> = (0..a.n).map(|i| i * pool.len() / a.n).collect();
    let batch = advaug_core::data::batch_from(pool, &idxs, DomainTag::Source(0));

    let needs_net = matches!(strategy, Strategy::AdvStn | Strategy::AdvStnColor);
    let net = if needs_net {
        let path = a.checkpoint.as_ref().ok_or_else(|| {
            Error::Config(format!("--strategy {} needs --checkpoint", strategy.name()))
        })?;
        let ck = Checkpoint::load(path)?;
        Some(ck.stn.ok_or_else(|| {
            Error::Config("checkpoint has no localization net (trained without adv-stn?)".into())
        })?)
    } else {
        None
    };

    let mut rng = stream_rng(a.seed, Stream::Augment, 0);
    let policy = AugmentPolicy::new(a.n_aug, a.m_aug)?;
    let transformed: Vec<_> = match strategy {
        Strategy::None => batch.images.clone(),
        Strategy::RndAll => augment_batch(&batch, policy, OpSet::RndAll, &mut rng)?.images,
        Strategy::RndColor => augment_batch(&batch, policy, OpSet::RndColor, &mut rng)?.images,
        Strategy::RndGeo => augment_batch(&batch, policy, OpSet::RndGeo, &mut rng)?.images,
        Strategy::AdvStn => net.unwrap().transform_images(&batch.images)?,
        Strategy::AdvStnColor => {
            let colored = augment_batch(&batch, policy, OpSet::RndColor, &mut rng)?;
            net.unwrap().transform_images(&colored.images)?
        }
    };

    std::fs::create_dir_all(&a.out)?;
    for (i, (orig, aug)) in batch.images.iter().zip(&transformed).enumerate() {
        orig.save_png(&a.out.join(format!("pair{i:02}_original.png")))?;
        aug.save_png(&a.out.join(format!("pair{i:02}_transformed.png")))?;
    }
    println!("wrote {} image pairs to {}", a.n, a.out.display());
    Ok(0)
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<i32> {
    if a.cases == 0 {
        return Err(Error::Config("--cases must be at least 1".into()));
    }
    let reports =
        gradcheck::run_suite(a.seed, a.cases, a.ops.as_deref(), a.perturb_op.as_deref())?;
    if reports.is_empty() {
        return Err(Error::Config(format!(
            "--ops {:?} matches no op (see gradcheck --help)",
            a.ops.unwrap_or_default()
        )));
    }
    println!("{:<20} {:>6} {:>14} verdict", "op", "cases", "max_rel_err");
    let mut failed = Vec::new();
    for r in &reports {
        println!(
            "{:<20} {:>6} {:>14.3e} {}",
            r.op,
            r.cases,
            r.max_rel_err,
            if r.pass { "pass" } else { "FAIL" }
        );
        if !r.pass {
            failed.push(r.op.clone());
        }
    }
    if failed.is_empty() {
        Ok(0)
    } else {
        eprintln!("gradient check failed for: {}", failed.join(", "));
        Ok(2)
    }
}

fn cmd_sweep(a: SweepArgs) -> Result<i32> {
    let mut s = load_settings(a.config.as_ref())?;
    if let Some(v) = a.out {
        s.out = v;
    }
    if let Some(v) = a.epochs {
        s.epochs = v;
    }
    if let Some(v) = a.strategy.as_deref() {
        s.strategy = Strategy::parse(v)?;
    }
    if let Some(v) = a.seeds.as_deref() {
        s.seeds = parse_seeds(v)?;
    }
    if let Some(v) = a.data {
        s.data = v;
    }
    if let Some(v) = a.target_domain {
        s.target_domain = v;
    }
    let mode = match a.mode.as_str() {
        "da" => Mode::Da,
        "dg" => Mode::Dg,
        other => return Err(Error::Config(format!("bad --mode {other:?} (want da or dg)"))),
    };
    let grid_c = parse_grid(&a.grid_c)?;
    let grid_t = parse_grid(&a.grid_t)?;

    let cfg = s.train_config(mode);
    cfg.validate()?;
    let datasets = parse_data_spec(&s.data)?.load()?;
    let t0 = Instant::now();
    let report = trainer::sweep(&cfg, &datasets, &grid_c, &grid_t)?;
    eprintln!("swept {} cells in {:.1}s", report.cells.len(), t0.elapsed().as_secs_f64());

    std::fs::create_dir_all(&s.out)?;
    write_out(&s.out.join("config.resolved"), &s.resolved(Some(mode)))?;
    let csv = trainer::sweep_csv(&report);
    write_out(&s.out.join("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(0)
}
