use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rewardopt::env::{EnvName, EnvSpec};
use rewardopt::orchestrator::{
    self, evaluate_candidate, load_evaluations, load_sets, report, run_batch, save_sets, sweep_selection_accuracy,
    synthesize_sets, BackendKind, Mode, RunConfig, SynthConfig,
};
use rewardopt::RewardProgram;

#[derive(Parser)]
#[command(name = "rewardopt", version, about = "Reward-function discovery with LLM-built evaluation councils")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run discovery batches, evaluate each winner and write a report.
    Discover(DiscoverArgs),
    /// Score one reward program at the train seed and the unseen seeds.
    Evaluate(EvaluateArgs),
    /// Council selection accuracy over saved experiment sets.
    Sweep(SweepArgs),
    /// Summarize evaluated runs below a directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct DiscoverArgs {
    /// TOML file with run settings; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<EnvName>,
    /// autonomous or with_metrics.
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    iterations: Option<u32>,
    #[arg(long)]
    candidates: Option<usize>,
    #[arg(long)]
    analyzers: Option<usize>,
    #[arg(long)]
    metrics: Option<usize>,
    /// mock, replay or live.
    #[arg(long)]
    backend: Option<BackendKind>,
    /// Transcript file or directory for the replay backend.
    #[arg(long)]
    transcript: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stop after discovery; no PP/GP evaluation or report.
    #[arg(long)]
    skip_evaluation: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// File holding one reward expression.
    #[arg(long)]
    candidate_file: PathBuf,
    #[arg(long)]
    env: EnvName,
    /// Unseen test seeds, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![3120u64, 2190, 6838, 4024])]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 42)]
    train_seed: u64,
    #[arg(long, default_value_t = 128)]
    instances: usize,
    /// Also write the report as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Directory of experiment sets, one sub-directory per set.
    #[arg(long)]
    sets_dir: PathBuf,
    /// Analyzer counts, e.g. 1..5.
    #[arg(long, default_value = "1..5", value_parser = parse_range)]
    analyzers: RangeInclusive<usize>,
    /// Metric counts for the fixed-analyzer variant, e.g. 1..3.
    #[arg(long, default_value = "1..3", value_parser = parse_range)]
    metrics: RangeInclusive<usize>,
    /// Generate this many synthetic noisy-analyzer sets into --sets-dir first.
    #[arg(long)]
    synthesize: Option<usize>,
    /// Analyzer noise for synthesized sets.
    #[arg(long, default_value_t = SynthConfig::default().noise)]
    noise: f64,
    #[arg(long, default_value_t = SynthConfig::default().seed)]
    seed: u64,
    /// Also write the accuracy table as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    runs_dir: PathBuf,
    /// Where summary.json and report.txt go; defaults to --runs-dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<RangeInclusive<usize>, String> {
    let parts: Vec<&str> = if let Some((a, b)) = s.split_once("..") {
        vec![a, b.trim_start_matches('=')]
    } else if let Some((a, b)) = s.split_once('-') {
        vec![a, b]
    } else {
        vec![s, s]
    };
    let lo: usize = parts[0].trim().parse().map_err(|_| format!("bad range '{s}'"))?;
    let hi: usize = parts[1].trim().parse().map_err(|_| format!("bad range '{s}'"))?;
    if lo == 0 || lo > hi {
        return Err(format!("range '{s}' must satisfy 1 <= start <= end"));
    }
    Ok(lo..=hi)
}

fn discover_config(args: &DiscoverArgs) -> Result<RunConfig> {
    let mut c = match &args.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(v) = args.env {
        c.env = v;
    }
    if let Some(v) = args.mode {
        c.mode = v;
    }
    if let Some(v) = args.runs {
        c.runs = v;
    }
    if let Some(v) = args.iterations {
        c.iterations = v;
    }
    if let Some(v) = args.candidates {
        c.candidates = v;
    }
    if let Some(v) = args.analyzers {
        c.analyzers = v;
    }
    if let Some(v) = args.metrics {
        c.metrics = v;
    }
    if let Some(v) = args.backend {
        c.backend.kind = v;
    }
    if let Some(v) = &args.transcript {
        c.backend.transcript = Some(v.clone());
        if args.backend.is_none() {
            c.backend.kind = BackendKind::Replay;
        }
    }
    if let Some(v) = &args.out {
        c.out = v.clone();
    }
    c.validate()?;
    Ok(c)
}

fn run_discover(args: DiscoverArgs) -> Result<()> {
    let config = discover_config(&args)?;
    if args.skip_evaluation {
        let outcomes = orchestrator::multi_run(&config);
        let mut failed = 0;
        for o in &outcomes {
            match &o.result {
                Ok(r) => println!(
                    "run{}: winner {} ({} LLM calls)",
                    o.run,
                    r.winner.as_ref().map_or("-", |w| w.source_text.as_str()),
                    r.llm_calls
                ),
                Err(e) => {
                    failed += 1;
                    println!("run{}: failed: {e}", o.run);
                }
            }
        }
        if failed == outcomes.len() {
            bail!("every run failed");
        }
        return Ok(());
    }
    let batch = run_batch(&config)?;
    for o in &batch.runs {
        if let Err(e) = &o.result {
            println!("run{}: failed: {e}", o.run);
        }
    }
    if batch.evaluations.is_empty() {
        bail!("every run failed; nothing to evaluate");
    }
    let dir = config.batch_dir();
    let summary = report(&batch.evaluations, &dir)?;
    print!("{}", orchestrator::report::render_text(&summary));
    println!("wrote {}", dir.display());
    Ok(())
}

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let env = EnvSpec::builtin(args.env)?;
    let source = std::fs::read_to_string(&args.candidate_file)
        .with_context(|| format!("reading {}", args.candidate_file.display()))?;
    let program = RewardProgram::compile(source.trim(), &env.schema)
        .with_context(|| format!("compiling {}", args.candidate_file.display()))?;
    let config = RunConfig::for_env(args.env);
    let r = evaluate_candidate(
        &env,
        &program,
        &config.trainer_config(),
        args.train_seed,
        &args.seeds,
        args.instances,
    )?;
    println!("reward     {}", r.candidate.source);
    println!("direction  {}", r.direction);
    println!("PP (seed {})  {:.6e}", r.candidate.pp.seed, r.candidate.pp.score);
    for s in &r.candidate.gp {
        println!("  seed {:>5}  {:.6e}", s.seed, s.score);
    }
    println!("GP         {:.6e} ± {:.3e}", r.candidate.gp_mean, r.candidate.gp_std);
    println!("baseline GP {:.6e} ± {:.3e}", r.baseline.gp_mean, r.baseline.gp_std);
    println!("normalized PP {:+.4}  GP {:+.4}", r.normalized_pp, r.normalized_gp);
    if let Some(out) = &args.out {
        write_json(out, &r)?;
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    orchestrator::rundir::write_json(path, value).with_context(|| format!("writing {}", path.display()))
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    if let Some(n) = args.synthesize {
        let cfg = SynthConfig {
            sets: n,
            analyzers: (*args.analyzers.end()).max(3),
            metrics: *args.metrics.end(),
            noise: args.noise,
            seed: args.seed,
            ..SynthConfig::default()
        };
        let sets = synthesize_sets(&cfg)?;
        save_sets(&sets, &args.sets_dir)?;
        println!("wrote {n} sets to {}", args.sets_dir.display());
    }
    let sets = load_sets(&args.sets_dir)?;
    let table = sweep_selection_accuracy(&sets, args.analyzers, args.metrics)?;
    print!("{}", table.render());
    if let Some(out) = &args.out {
        write_json(out, &table)?;
    }
    Ok(())
}

fn run_report(args: ReportArgs) -> Result<()> {
    let evals = load_evaluations(&args.runs_dir)?;
    let out = args.out.unwrap_or_else(|| args.runs_dir.clone());
    let summary = report(&evals, &out)?;
    print!("{}", orchestrator::report::render_text(&summary));
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Discover(a) => run_discover(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Report(a) => run_report(a),
    }
}
