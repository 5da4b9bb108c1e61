use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use offtrack::cli::{self, Config, RunContext};
use offtrack::model::{load_question_set, TestKind};
use offtrack::simreasoner::{self, BehaviorKind};

#[derive(Parser)]
#[command(name = "offtrack", about = "Off-trajectory reasoning evaluation harness", version)]
struct Cli {
    /// Path to the run configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured run id.
    #[arg(long, global = true)]
    run_id: Option<String>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the gateway's in-flight request cap.
    #[arg(long, global = true)]
    max_inflight: Option<usize>,
    /// Skip stages whose outputs already exist.
    #[arg(long, global = true)]
    resume: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample and verify solo trajectories for a model.
    Solo {
        /// Model to sample (defaults to the main model).
        #[arg(long)]
        model: Option<String>,
    },
    /// Build recoverability test items from the solo stores.
    GenRecov,
    /// Build guidability test items from the guide models' solo stores.
    GenGuid,
    /// Force off-trajectory completions on generated items and verify them.
    Run {
        /// Which item kind to run.
        #[arg(long, value_parser = parse_kind)]
        kind: TestKind,
    },
    /// Compute metrics.json from the stores.
    Score,
    /// Render reports from metrics.json.
    Report {
        /// Metrics file of a base run to diff against (ablation table).
        #[arg(long)]
        ablation_base: Option<PathBuf>,
    },
    /// Serve the deterministic mock model on localhost.
    MockServe {
        /// Question file whose golds seed the answer book.
        #[arg(long)]
        questions: PathBuf,
        /// Scripted behavior: oracle, distracted, recoverer, parrot, stubborn_wrong.
        #[arg(long, default_value = "oracle")]
        behavior: BehaviorKind,
        #[arg(long, default_value_t = 0)]
        port: u16,
        /// Fixed per-request delay in milliseconds.
        #[arg(long, default_value_t = 0)]
        latency_ms: u64,
    },
}

fn parse_kind(s: &str) -> Result<TestKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "recov" | "recoverability" => Ok(TestKind::RECOVERABILITY),
        "guid" | "guidability" => Ok(TestKind::GUIDABILITY),
        other => Err(format!("unknown kind {other:?}; use recov or guid")),
    }
}

impl Cli {
    fn load_config(&self) -> Result<Config> {
        let path = self
            .config
            .clone()
            .ok_or_else(|| anyhow::anyhow!("--config is required for this subcommand"))?;
        let mut config = Config::load(path)?;
        if let Some(run_id) = &self.run_id {
            config.run_id = run_id.clone();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(cap) = self.max_inflight {
            config.concurrency.max_inflight = cap;
        }
        Ok(config)
    }
}

#[tokio::main]
async fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::MockServe { questions, behavior, port, latency_ms } => {
            let set = load_question_set(questions)?;
            let handle = simreasoner::serve(&set, *behavior, *port, *latency_ms).await?;
            println!("mock server ({behavior:?}) listening on {}", handle.url());
            tokio::signal::ctrl_c().await?;
            handle.shutdown().await;
            Ok(())
        }
        Command::Solo { model } => {
            let ctx = RunContext::new(cli.load_config()?)?;
            cli::cmd_solo(&ctx, model.as_deref(), cli.resume).await
        }
        Command::GenRecov => {
            let ctx = RunContext::new(cli.load_config()?)?;
            cli::cmd_gen_recoverability(&ctx, cli.resume).await
        }
        Command::GenGuid => {
            let ctx = RunContext::new(cli.load_config()?)?;
            cli::cmd_gen_guidability(&ctx, cli.resume).await
        }
        Command::Run { kind } => {
            let ctx = RunContext::new(cli.load_config()?)?;
            cli::cmd_run(&ctx, *kind, cli.resume).await
        }
        Command::Score => {
            let ctx = RunContext::new(cli.load_config()?)?;
            cli::cmd_score(&ctx).map(|_| ())
        }
        Command::Report { ablation_base } => {
            let ctx = RunContext::new(cli.load_config()?)?;
            cli::cmd_report(&ctx, ablation_base.as_deref()).map(|_| ())
        }
    }
}
