use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deskrl::config::RLConfig;
use deskrl::envs::{self, TaskId};
use deskrl::rollout::{compare_schedulers, simulate_streaming, simulate_sync, LengthDist, SrsConfig};
use deskrl::{checkpoint, rng, trainer, Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "deskrl", version, about = "Small-scale RL training kit for verifiable puzzles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a TOML config; writes metrics, timings, checkpoint and summary into DIR.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on freshly generated instances (avg@k and pass@k).
    Eval(EvalArgs),
    /// Generate puzzle instances as JSON lines.
    Gen {
        #[arg(long)]
        task: TaskId,
        #[arg(long)]
        difficulty: u8,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check answers against a dataset. Without answers the reference solutions are checked.
    Verify {
        /// Dataset of JSON lines as written by `gen`.
        #[arg(long)]
        dataset: PathBuf,
        /// One answer applied to every instance.
        #[arg(long, conflicts_with = "answers")]
        answer: Option<String>,
        /// File with one answer per line, matched to instances by position.
        #[arg(long)]
        answers: Option<PathBuf>,
    },
    /// Compare synchronous and streaming rollout scheduling in simulation.
    Simulate(SimArgs),
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    task: TaskId,
    #[arg(long)]
    difficulty: u8,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    /// Response length cap; defaults to a per-task value.
    #[arg(long)]
    max_len: Option<usize>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = 0.8)]
    alpha: f64,
    #[arg(long, default_value_t = 16)]
    main_units: usize,
    #[arg(long, default_value_t = 2)]
    standalone_units: usize,
    /// Tokens per unit per tick.
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    /// Speed multiplier of standalone units.
    #[arg(long, default_value_t = 2.0)]
    fp8_speedup: f64,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    /// Log-normal location of response lengths.
    #[arg(long, default_value_t = 5.0)]
    mu: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 2000)]
    max_len: u64,
    #[arg(long, default_value_t = 200)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// 0 means four batches.
    #[arg(long, default_value_t = 0)]
    pool_capacity: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cmd {
        Command::Train { config, out: dir } => {
            let cfg = RLConfig::load(&config)?;
            let (outcome, files) = trainer::train(&cfg, &dir)?;
            let line = json!({
                "steps": outcome.steps,
                "final_pass_at_1": outcome.final_pass_at_1,
                "config_hash": format!("{:016x}", outcome.config_hash),
                "metrics": files.metrics,
                "checkpoint": files.checkpoint,
            });
            writeln!(out, "{line}")?;
        }
        Command::Eval(a) => {
            let (params, _) = checkpoint::load::<f64>(&a.ckpt)?;
            let max_len = a.max_len.unwrap_or_else(|| trainer::default_eval_len(a.task, a.difficulty));
            let report = trainer::evaluate_params(&params, a.task, a.difficulty, a.n, a.k, a.seed, a.instances, max_len)?;
            writeln!(out, "{}", serde_json::to_string(&report)?)?;
        }
        Command::Gen { task, difficulty, count, seed, out: path } => {
            let instances = (0..count)
                .map(|i| envs::generate(task, difficulty, rng::mix(&[seed, i as u64])))
                .collect::<Result<Vec<_>>>()?;
            match path {
                Some(p) => {
                    let mut w = BufWriter::new(File::create(p)?);
                    envs::write_dataset(&mut w, &instances)?;
                    w.flush()?;
                }
                None => envs::write_dataset(&mut out, &instances)?,
            }
        }
        Command::Verify { dataset, answer, answers } => {
            let instances = envs::read_dataset(BufReader::new(File::open(&dataset)?))?;
            let answers: Vec<String> = match (answer, answers) {
                (Some(a), _) => vec![a; instances.len()],
                (None, Some(p)) => {
                    let lines = BufReader::new(File::open(&p)?).lines().collect::<io::Result<Vec<_>>>()?;
                    if lines.len() != instances.len() {
                        return Err(Error::invalid(format!(
                            "{} answers for {} instances",
                            lines.len(),
                            instances.len()
                        )));
                    }
                    lines
                }
                (None, None) => instances.iter().map(|i| i.reference_solution.clone()).collect(),
            };
            for (i, (inst, ans)) in instances.iter().zip(&answers).enumerate() {
                let v = envs::verify(inst, ans);
                writeln!(out, "{}", json!({ "index": i, "answer": ans, "kind": v.kind, "detail": v.detail }))?;
            }
        }
        Command::Simulate(a) => simulate(&a, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn simulate(a: &SimArgs, out: &mut impl Write) -> Result<()> {
    let cfg = SrsConfig {
        alpha_onpolicy: a.alpha,
        n_main_units: a.main_units,
        n_standalone_units: a.standalone_units,
        tokens_per_unit_per_tick: a.rate,
        fp8_speedup: a.fp8_speedup,
        batch_size: a.batch,
        lengths: LengthDist::LogNormal { mu: a.mu, sigma: a.sigma, max: a.max_len },
        pool_capacity: if a.pool_capacity == 0 { 4 * a.batch } else { a.pool_capacity },
    };
    cfg.validate()?;
    let sync = simulate_sync(&cfg, a.iterations, a.seed)?;
    for r in &sync.iterations {
        writeln!(out, "{}", tagged("sync", serde_json::to_value(r)?))?;
    }
    let stream = simulate_streaming(&cfg, a.iterations, a.seed)?;
    for r in &stream.iterations {
        writeln!(out, "{}", tagged("streaming", serde_json::to_value(r)?))?;
    }
    let cmp = compare_schedulers(&cfg, a.iterations, a.seed)?;
    let summary = json!({
        "summary": cmp,
        "warmup_ticks": stream.warmup_ticks,
        "staleness_histogram": stream.staleness_histogram,
        "dropped": stream.dropped,
        "stall": stream.stall,
    });
    writeln!(out, "{summary}")?;
    Ok(())
}

fn tagged(scheduler: &str, mut record: serde_json::Value) -> serde_json::Value {
    record["scheduler"] = json!(scheduler);
    record
}
