//! The `bid2x` command line. [`run`] parses arguments, executes one
//! subcommand and maps the outcome to an exit code: 0 success, 1 usage or
//! configuration error, 2 data error, 3 numeric failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::RunConfig;
use crate::data::{partition_by_scenario, DayPair, PreparedSample, TARGETS};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, export_distribution, probe_monotonicity, probe_predictability, select_bid, BidMode, BidState,
    ConstantPredictor,
};
use crate::gradcheck::{run_gradcheck, GradcheckConfig};
use crate::pipeline::{few_shot_split, finetune, fit, model_config_for, scaling_sweep, zero_shot_eval, Prepared, Splits};
use crate::synth::write_generated;
use crate::train::{write_metrics, TrainConfig};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "bid2x", version, about = "Bidding environment model: data, training, probes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "bid2x-out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = SplitName::Test)]
    pub split: SplitName,
    #[arg(long, global = true)]
    pub fraction: Option<f64>,
    /// Comma-separated scenario ids kept out of training.
    #[arg(long, global = true, value_delimiter = ',')]
    pub holdout: Option<Vec<u32>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub mode: Option<BidMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset and its scenario manifest.
    Generate,
    Train,
    /// Continue training on a fraction of the holdout scenarios.
    Finetune,
    Eval,
    ProbeMono,
    ProbePred,
    ZeroShot,
    ExportHist,
    BidSelect,
    ScalingSweep,
    /// Finite-difference check of the full model gradient.
    Gradcheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
    Holdout,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Contract(_) => 1,
        Error::Io { .. }
        | Error::Load(_)
        | Error::Data(_)
        | Error::Lookup { .. }
        | Error::Truncation { .. }
        | Error::Checkpoint(_) => 2,
        Error::Numeric { .. } | Error::Tensor(_) => 3,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Loads the config, applies flag overrides and pins the seeds.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(h) = &cli.holdout {
        cfg.data.holdout = h.clone();
    }
    if let Some(f) = cli.fraction {
        cfg.finetune.fraction = f;
    }
    if let Some(a) = &cli.alphas {
        cfg.probe.monotonicity.alphas = a.clone();
    }
    if let Some(g) = &cli.grid {
        cfg.probe.grid = g.clone();
    }
    if let Some(m) = cli.mode {
        cfg.probe.mode = m;
    }
    cfg.resolve()
}

/// Campaign-disjoint splits of the non-holdout scenarios, plus the holdout.
struct Data {
    splits: Splits,
    holdout: Vec<DayPair>,
    header: crate::data::DatasetHeader,
}

fn load_data(cfg: &RunConfig) -> Result<Data> {
    let ds = cfg.load_data()?;
    let (keep, holdout) = partition_by_scenario(&ds.pairs, &cfg.data.holdout);
    Ok(Data {
        splits: Splits::new(&keep, cfg.data.split, cfg.seed)?,
        holdout,
        header: ds.header,
    })
}

impl Data {
    fn pairs(&self, split: SplitName) -> Result<&[DayPair]> {
        let v = match split {
            SplitName::Train => &self.splits.train,
            SplitName::Val => &self.splits.val,
            SplitName::Test => &self.splits.test,
            SplitName::Holdout => &self.holdout,
        };
        if v.is_empty() {
            return Err(Error::Data(format!("split {split:?} is empty")));
        }
        Ok(v)
    }
}

fn need_checkpoint(cli: &Cli) -> Result<Checkpoint> {
    let path = cli
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("this command needs --checkpoint".into()))?;
    load_checkpoint(path)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut s = String::new();
    for r in rows {
        s += &serde_json::to_string(r).map_err(|e| Error::Data(e.to_string()))?;
        s.push('\n');
    }
    write_text(path, &s)
}

fn finetune_config(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        lr: cfg.finetune.lr,
        epochs: cfg.finetune.epochs,
        batch_size: cfg.finetune.batch_size,
        ..cfg.train.clone()
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let out = &cli.out;
    cfg.write_resolved(out)?;
    match cli.command {
        Command::Generate => {
            let ds = crate::synth::generate_dataset(&cfg.scenario, cfg.data.campaigns_per_scenario)?;
            write_generated(out, &cfg.scenario, cfg.data.campaigns_per_scenario, &ds)?;
            println!("wrote {} campaign-days to {}", ds.pairs.len(), out.display());
        }
        Command::Train => {
            let data = load_data(&cfg)?;
            let prepared = Prepared::new(&data.splits, cfg.data.t_max)?;
            let mc = model_config_for(&data.header, &cfg.model);
            let (ck, metrics) = fit(&mc, &cfg.train, &prepared)?;
            save_checkpoint(out.join("checkpoint.bin"), &ck)?;
            write_metrics(&out.join("metrics.jsonl"), &metrics)?;
            let report = evaluate(&ck.fitted(), &prepared.test, "test")?;
            write_text(&out.join("eval_test.txt"), &report.table())?;
            print!("{}", report.table());
        }
        Command::Finetune => {
            let ck = need_checkpoint(cli)?;
            let data = load_data(&cfg)?;
            let held = data.pairs(SplitName::Holdout)?;
            let tc = finetune_config(&cfg);
            let (_, rest) = few_shot_split(held, cfg.finetune.fraction, tc.seed)?;
            let rest_samples = PreparedSample::prepare_all(&rest, &ck.stats)?;
            let before = evaluate(&ck.fitted(), &rest_samples, "holdout")?;
            let (tuned, metrics) = finetune(&ck, held, &[], cfg.finetune.fraction, &tc)?;
            let after = evaluate(&tuned.fitted(), &rest_samples, "holdout")?;
            save_checkpoint(out.join("checkpoint.bin"), &tuned)?;
            write_metrics(&out.join("metrics.jsonl"), &metrics)?;
            write_jsonl(&out.join("finetune.jsonl"), &[&before, &after])?;
            println!("before fine-tuning\n{}after fine-tuning\n{}", before.table(), after.table());
        }
        Command::Eval => {
            let ck = need_checkpoint(cli)?;
            let data = load_data(&cfg)?;
            let samples = PreparedSample::prepare_all(data.pairs(cli.split)?, &ck.stats)?;
            let report = evaluate(&ck.fitted(), &samples, &format!("{:?}", cli.split).to_lowercase())?;
            write_jsonl(&out.join("eval.jsonl"), &report.targets)?;
            write_text(&out.join("eval.txt"), &report.table())?;
            print!("{}", report.table());
        }
        Command::ProbeMono => {
            let ck = need_checkpoint(cli)?;
            let data = load_data(&cfg)?;
            let fitted = ck.fitted();
            let r = probe_monotonicity(&fitted.view(), &ck.stats, data.pairs(cli.split)?, &cfg.probe.monotonicity)?;
            write_jsonl(&out.join("probe_mono.jsonl"), &r.buckets)?;
            write_text(&out.join("probe_mono.txt"), &r.table())?;
            print!("{}", r.table());
        }
        Command::ProbePred => {
            let ck = need_checkpoint(cli)?;
            let data = load_data(&cfg)?;
            let fitted = ck.fitted();
            let r = probe_predictability(&fitted.view(), &ck.stats, data.pairs(cli.split)?)?;
            write_jsonl(&out.join("probe_pred.jsonl"), &r.points)?;
            write_text(&out.join("probe_pred.txt"), &r.table())?;
            print!("{}", r.table());
        }
        Command::ZeroShot => {
            let ck = need_checkpoint(cli)?;
            let data = load_data(&cfg)?;
            let held = data.pairs(SplitName::Holdout)?;
            let report = zero_shot_eval(&ck, held)?;
            let train = PreparedSample::prepare_all(&data.splits.train, &ck.stats)?;
            let held_samples = PreparedSample::prepare_all(held, &ck.stats)?;
            let base = evaluate(&ConstantPredictor::mean_of(&train)?, &held_samples, "holdout")?;
            write_jsonl(&out.join("zero_shot.jsonl"), &[&report, &base])?;
            println!("model\n{}constant mean\n{}", report.table(), base.table());
        }
        Command::ExportHist => {
            let ck = need_checkpoint(cli)?;
            let data = load_data(&cfg)?;
            let samples = PreparedSample::prepare_all(data.pairs(cli.split)?, &ck.stats)?;
            let fitted = ck.fitted();
            for (i, t) in TARGETS.iter().enumerate() {
                if !cfg.probe.target.is_empty() && cfg.probe.target != *t {
                    continue;
                }
                let h = export_distribution(&fitted.view(), &samples, i, cfg.probe.bins)?;
                let path = out.join(format!("hist_{t}.txt"));
                write_text(&path, &h.to_text())?;
                println!(
                    "{t}: zero bin predicted {:.4} truth {:.4} -> {}",
                    h.zero_predicted,
                    h.zero_truth,
                    path.display()
                );
            }
        }
        Command::BidSelect => {
            let ck = need_checkpoint(cli)?;
            let data = load_data(&cfg)?;
            let mut rows = Vec::new();
            for pair in data
                .pairs(cli.split)?
                .iter()
                .filter(|p| p.today.len() >= 2)
                .take(cfg.probe.max_trajectories)
            {
                let recs = &pair.today.records;
                let half = recs.len() / 2;
                let spent: f64 = recs[..half].iter().map(|r| r.cost).sum();
                let remaining = (pair.campaign.budget - spent).max(0.0);
                let state = BidState {
                    pair,
                    observed: &recs[..half],
                    next_tick: recs[half].tick,
                };
                let sel = select_bid(&ck.model, &ck.stats, &state, remaining, &cfg.probe.grid, cfg.probe.mode)?;
                println!(
                    "{} tick {} remaining {remaining:.2}: bid {} (logged {:.2})",
                    pair.campaign.id, recs[half].tick, sel.bid, recs[half].bid
                );
                rows.push(sel);
            }
            write_jsonl(&out.join("bids.jsonl"), &rows)?;
        }
        Command::ScalingSweep => {
            let data = load_data(&cfg)?;
            let prepared = Prepared::new(&data.splits, cfg.data.t_max)?;
            let mc = model_config_for(&data.header, &cfg.model);
            let r = scaling_sweep(&mc, &cfg.train, &cfg.sweep.d_model, &cfg.sweep.seeds, &prepared)?;
            write_jsonl(&out.join("sweep.jsonl"), &r.rows)?;
            write_text(&out.join("sweep.txt"), &r.table())?;
            print!("{}", r.table());
        }
        Command::Gradcheck => {
            let gc = GradcheckConfig {
                seed: cfg.seed,
                ..GradcheckConfig::default()
            };
            let r = run_gradcheck(&gc)?;
            write_jsonl(&out.join("gradcheck.jsonl"), &r.tensors)?;
            println!("checked {} entries, max relative error {:.3e}", r.checked, r.max_rel_error);
            if !(r.max_rel_error < GRADCHECK_TOLERANCE) {
                return Err(Error::Numeric {
                    step: 0,
                    term: "gradient".into(),
                    detail: format!("relative error {:.3e} exceeds {GRADCHECK_TOLERANCE:e}", r.max_rel_error),
                });
            }
        }
    }
    info!("outputs in {}", out.display());
    Ok(())
}
