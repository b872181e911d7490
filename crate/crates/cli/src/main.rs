//! `genbench`: benchmark runs, preprocessing ablations, toy training and sampling.

mod commands;
mod config;
mod error;
mod record;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(
    name = "genbench",
    version,
    about = "Evaluate generative image models and run the toy interpolant rig"
)]
struct Cli {
    /// TOML config, or a run_record.json to replay.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute metrics between a reference and a candidate embedding file.
    Eval(EvalArgs),
    /// Apply a preprocessing chain to a tile set, one arm for guidance and one for validation.
    Pipeline(PipelineArgs),
    /// Train the toy autoencoder and denoiser.
    Train(TrainArgs),
    /// Generate images from a checkpoint.
    Sample(SampleArgs),
    /// Mean and spread of a metric over subsamples of a candidate pool.
    Bootstrap(BootstrapArgs),
    /// Write a procedural toy tile set and its manifest.
    GenData(GenDataArgs),
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    candidate: Option<PathBuf>,
    #[arg(long)]
    fld_test: Option<PathBuf>,
    #[arg(long)]
    reference_ids: Option<PathBuf>,
    #[arg(long)]
    candidate_ids: Option<PathBuf>,
    /// Repeatable: fd, fld, pr, precision, recall, cosine_sim.
    #[arg(long = "metric")]
    metrics: Vec<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    extractor_id: Option<String>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    tiles: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Print the preset names and exit.
    #[arg(long)]
    list_presets: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Use the EMA (on) or live (off) parameters.
    #[arg(long, value_parser = parse_switch)]
    ema: Option<bool>,
    #[arg(long)]
    conditions: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    /// Repeatable step counts to sweep.
    #[arg(long = "sweep")]
    sweep: Vec<usize>,
    #[arg(long, num_args = 2)]
    anchors: Option<Vec<usize>>,
    /// Repeatable interpolation factors between the anchors.
    #[arg(long = "lambda")]
    lambdas: Vec<f64>,
    #[arg(long)]
    cfg_scale: Option<f64>,
}

#[derive(Debug, Args)]
struct BootstrapArgs {
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    tile: Option<u32>,
    #[arg(long)]
    expand: Option<u32>,
}

fn parse_switch(s: &str) -> std::result::Result<bool, String> {
    match s {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(format!("expected on/off, got {s:?}")),
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

/// Folds command-line flags into the file config.
fn apply_flags(cfg: &mut RunConfig, cli: Cli) -> Result<Command> {
    set_opt(&mut cfg.seed, cli.seed);
    set_opt(&mut cfg.threads, cli.threads);
    set_opt(&mut cfg.output, cli.output);
    match &cli.command {
        Command::Eval(a) => {
            let e = &mut cfg.eval;
            set_opt(&mut e.reference, a.reference.clone());
            set_opt(&mut e.candidate, a.candidate.clone());
            set_opt(&mut e.fld_test, a.fld_test.clone());
            set_opt(&mut e.reference_ids, a.reference_ids.clone());
            set_opt(&mut e.candidate_ids, a.candidate_ids.clone());
            set_opt(&mut e.extractor_id, a.extractor_id.clone());
            set(&mut e.k, a.k);
            if !a.metrics.is_empty() {
                e.metrics = a.metrics.clone();
            }
        }
        Command::Pipeline(a) => {
            let p = &mut cfg.pipeline;
            set_opt(&mut p.manifest, a.manifest.clone());
            set_opt(&mut p.tiles, a.tiles.clone());
            set_opt(&mut p.preset, a.preset.clone());
        }
        Command::Train(a) => {
            set(&mut cfg.train.steps, a.steps);
            set_opt(&mut cfg.train_io.data_dir, a.data.clone());
            set_opt(&mut cfg.train_io.resume, a.resume.clone());
        }
        Command::Sample(a) => {
            let s = &mut cfg.sample;
            set_opt(&mut s.checkpoint, a.checkpoint.clone());
            set(&mut s.n, a.n);
            set(&mut s.ema, a.ema);
            set_opt(&mut s.conditions, a.conditions.clone());
            if let Some(v) = &a.anchors {
                s.anchors = Some([v[0], v[1]]);
            }
            if !a.lambdas.is_empty() {
                s.lambdas = a.lambdas.clone();
            }
            if !a.sweep.is_empty() {
                s.steps = a.sweep.clone();
            }
            if let Some(sc) = &a.scheme {
                cfg.sampler.scheme = sc.parse()?;
            }
            set(&mut cfg.sampler.steps, a.steps);
            set(&mut cfg.sampler.cfg_scale, a.cfg_scale);
        }
        Command::Bootstrap(a) => {
            let b = &mut cfg.bootstrap;
            set_opt(&mut b.pool, a.pool.clone());
            set_opt(&mut b.reference, a.reference.clone());
            set(&mut b.metric, a.metric.clone());
            set(&mut b.subsample, a.subsample);
            set(&mut b.replicates, a.replicates);
        }
        Command::GenData(a) => {
            let g = &mut cfg.gen_data;
            set(&mut g.n, a.n);
            set(&mut g.tile, a.tile);
            set(&mut g.expand, a.expand);
        }
    }
    Ok(cli.command)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Eval(_) => "eval",
        Command::Pipeline(_) => "pipeline",
        Command::Train(_) => "train",
        Command::Sample(_) => "sample",
        Command::Bootstrap(_) => "bootstrap",
        Command::GenData(_) => "gen-data",
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Pipeline(a) = &cli.command {
        if a.list_presets {
            for p in commands::pipeline::PRESETS {
                println!("{}", p.name);
            }
            return Ok(());
        }
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let command = apply_flags(&mut cfg, cli)?;
    let name = command_name(&command);
    let cfg = cfg.resolve()?;
    let output = cfg
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from("genbench-out").join(name));
    genbench::par::with_threads(cfg.threads, || {
        let mut rec = record::RunRecord::new(name, &cfg);
        match command {
            Command::Eval(_) => commands::eval::run(&cfg, &mut rec)?,
            Command::Pipeline(_) => commands::pipeline::run(&cfg, &output, &mut rec)?,
            Command::Train(_) => commands::train::run(&cfg, &output, &mut rec)?,
            Command::Sample(_) => commands::sample::run(&cfg, &output, &mut rec)?,
            Command::Bootstrap(_) => commands::bootstrap::run(&cfg, &mut rec)?,
            Command::GenData(_) => commands::gen_data::run(&cfg, &output, &mut rec)?,
        }
        rec.save(&output)?;
        print!("{}", rec.summary());
        Ok(())
    })
}

fn main() {
    let cli = Cli::parse();
    let name = command_name(&cli.command);
    if let Err(e) = run(cli) {
        eprintln!("{}", e.to_json(name));
        std::process::exit(e.exit_code());
    }
}
