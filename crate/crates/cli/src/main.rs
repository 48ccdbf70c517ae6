use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sail_core::io::{load_config, load_dataset, write_json};
use sail_core::pipeline::{self, EvalOptions, Task};
use sail_core::trainer::save_checkpoint;
use sail_core::TrainConfig;

#[derive(Parser)]
#[command(
    name = "sail",
    version,
    about = "Self-distilled graph encoder: train, evaluate, ablate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an encoder on a dataset directory.
    Train {
        #[command(flatten)]
        common: Common,
        /// Search the alpha × lambda grid, keeping the best validation run.
        #[arg(long)]
        sweep: bool,
    },
    /// Evaluate a checkpoint on downstream tasks.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated subset of classify,cluster,linkpred,mad,diagnostics, or `all`.
        #[arg(long, default_value = "all")]
        tasks: String,
    },
    /// Train and evaluate the four loss-term variants.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Number of seeds per variant, counted up from --seed.
        #[arg(long, default_value_t = 3)]
        seeds: u64,
    },
    /// Hold out 20% of each node's edges for link prediction.
    Linksplit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Feature smoothness and clustering coefficient per dataset.
    Diagnostics {
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn config(&self) -> Result<Option<TrainConfig>> {
        let mut cfg = match &self.config {
            Some(p) => Some(load_config(p)?),
            None => None,
        };
        if let Some(seed) = self.seed {
            cfg.get_or_insert_with(TrainConfig::default).seed = seed;
        }
        Ok(cfg)
    }

    fn config_or_default(&self) -> Result<TrainConfig> {
        Ok(self.config()?.unwrap_or_default())
    }
}

fn eval_options(seed: u64) -> EvalOptions {
    let mut o = EvalOptions::default();
    o.probe.seed = seed;
    o.kmeans.seed = seed;
    o.mad.seed = seed;
    o
}

fn train_sweep(data: &Path, cfg: &TrainConfig, out: &Path) -> Result<serde_json::Value> {
    let (g, _) = load_dataset(data)?;
    let probe = eval_options(cfg.seed).probe;
    let (best, state, points) = sail_core::pipeline::sweep(
        &g,
        cfg,
        &pipeline::ALPHA_GRID,
        &pipeline::LAMBDA_GRID,
        &probe,
    )?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let ckpt = out.join(pipeline::CHECKPOINT_FILE);
    save_checkpoint(&state, &ckpt)?;
    let mut manifest = sail_core::io::RunManifest::new("train --sweep", data, &best)?;
    manifest
        .outputs
        .insert("checkpoint".into(), ckpt.display().to_string());
    manifest
        .outputs
        .insert("sweep".into(), out.join("sweep.json").display().to_string());
    write_json(&out.join("sweep.json"), &points)?;
    write_json(&out.join(pipeline::MANIFEST_FILE), &manifest)?;
    Ok(json!({"checkpoint": ckpt, "alpha": best.alpha, "lambda": best.lambda}))
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    match cli.command {
        Command::Train { common, sweep } => {
            let cfg = common.config_or_default()?;
            if sweep {
                return train_sweep(&common.data, &cfg, &common.out);
            }
            let m = pipeline::train_run(&common.data, &cfg, &common.out)?;
            Ok(json!({"outputs": m.outputs, "input_hash": m.input_hash}))
        }
        Command::Eval {
            common,
            checkpoint,
            tasks,
        } => {
            let tasks = Task::parse_list(&tasks)?;
            let cfg = common.config()?;
            let seed = cfg.as_ref().map_or(0, |c| c.seed);
            let reports = pipeline::eval_run(
                &common.data,
                &checkpoint,
                &tasks,
                &common.out,
                cfg.as_ref(),
                &eval_options(seed),
            )?;
            Ok(serde_json::to_value(reports)?)
        }
        Command::Ablate { common, seeds } => {
            let cfg = common.config_or_default()?;
            let seeds: Vec<u64> = (0..seeds.max(1)).map(|i| cfg.seed + i).collect();
            let rows = pipeline::ablate_run(
                &common.data,
                &cfg,
                &seeds,
                &common.out,
                &eval_options(cfg.seed),
            )?;
            Ok(serde_json::to_value(rows)?)
        }
        Command::Linksplit { data, out, seed } => Ok(serde_json::to_value(
            pipeline::linksplit_run(&data, &out, seed)?,
        )?),
        Command::Diagnostics { data, out } => Ok(serde_json::to_value(pipeline::diagnostics_run(
            &data,
            out.as_deref(),
        )?)?),
    }
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SAIL_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("SAIL_THREADS={v:?} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    e.downcast_ref::<sail_core::Error>()
        .map_or("error", sail_core::Error::kind)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match init_threads().and_then(|_| run(cli)) {
        Ok(summary) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).unwrap_or_default()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            let err = json!({"error": {"kind": error_kind(&e), "message": format!("{e:#}")}});
            eprintln!("{err}");
            ExitCode::FAILURE
        }
    }
}
