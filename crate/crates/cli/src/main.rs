use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use divrr::explore::WaypointRecord;
use divrr::harness::{
    emit_report, read_trace, render, run_episodes, write_episode_logs, ExperimentConfig, HarnessError, ReportFormat,
    SuiteReport,
};
use divrr::world::{generate_suite, read_suite, write_suite, GenConfig};

const EPISODE_LOG: &str = "episodes.jsonl";

#[derive(Parser)]
#[command(name = "divrr", version, about = "Run and inspect view-refinement ablation suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a paired Dynamic/Static suite.
    Gen {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Generator settings as JSON; defaults apply to missing keys.
        #[arg(long)]
        gen_config: Option<PathBuf>,
        /// Overrides the number of questions.
        #[arg(long)]
        questions: Option<usize>,
    },
    /// Run an experiment config and write the report and episode logs.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's worker count.
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Print a stored report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
    },
    /// Print the waypoint log of one episode.
    Trace {
        #[arg(long)]
        episode: String,
        /// Directory holding the episode logs of a run.
        #[arg(long = "in", default_value = ".")]
        input: PathBuf,
        /// Print raw JSON lines instead of a table.
        #[arg(long)]
        json: bool,
    },
}

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn gen(seed: u64, out: &Path, gen_config: Option<&Path>, questions: Option<usize>) -> Result<()> {
    let mut cfg = match gen_config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => GenConfig::default(),
    };
    if let Some(n) = questions {
        cfg.question_count = n;
    }
    let suite = generate_suite(&cfg, seed)?;
    write_suite(out, &suite)?;
    println!(
        "wrote {} questions in {} worlds to {}",
        suite.question_count(),
        suite.scenarios.len(),
        out.display()
    );
    Ok(())
}

fn run(config: &Path, out: &Path, parallelism: Option<usize>) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(p) = parallelism {
        cfg.parallelism = p;
    }
    let suite = read_suite(&cfg.suite)?;
    let components = divrr_remote::components(&cfg.run)?;
    let outcomes = run_episodes(&cfg, &suite, &components, |o| (o.result, o.log))?;

    std::fs::create_dir_all(out)?;
    write_episode_logs(
        &out.join(EPISODE_LOG),
        outcomes
            .iter()
            .map(|(_, (r, log))| (r.episode_id.as_str(), log.as_slice())),
    )?;
    let report = SuiteReport::from_results(
        cfg.backbone,
        &cfg.seeds,
        outcomes.into_iter().map(|(_, (r, _))| r).collect(),
    );
    emit_report(&report, out)?;
    print!("{}", render(&report, ReportFormat::Table)?);
    report.check_complete()?;
    Ok(())
}

fn report(input: &Path, format: ReportFormat) -> Result<()> {
    let report = SuiteReport::load(input)?;
    print!("{}", render(&report, format)?);
    Ok(())
}

fn trace_table(records: &[WaypointRecord]) -> String {
    let mut s = String::from("wp   cell      head  t     score  trigger          views  sel    gate  mem\n");
    for r in records {
        let trigger = serde_json::to_value(r.trigger)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        let cell = format!("({},{})", r.pose.x, r.pose.y);
        let _ = writeln!(
            s,
            "{:<4} {:<9} {:>4.0}  {:<5} {:.3}  {:<16} {:<6} {:.3}  {:<5} {}",
            r.waypoint,
            cell,
            r.pose.heading,
            r.pose.timestep,
            r.score,
            trigger,
            r.views.len(),
            r.selected_score,
            r.gate,
            r.memory_size
        );
    }
    s
}

fn trace(input: &Path, episode: &str, json: bool) -> Result<()> {
    let path = if input.is_dir() { input.join(EPISODE_LOG) } else { input.to_path_buf() };
    let records = read_trace(&path, episode)?;
    if records.is_empty() {
        return Err(format!("no waypoints for episode {episode:?} in {}", path.display()).into());
    }
    if json {
        for r in &records {
            println!("{}", serde_json::to_string(r)?);
        }
    } else {
        print!("{}", trace_table(&records));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Gen {
            seed,
            out,
            gen_config,
            questions,
        } => gen(*seed, out, gen_config.as_deref(), *questions),
        Command::Run {
            config,
            out,
            parallelism,
        } => run(config, out, *parallelism),
        Command::Report { input, format } => report(input, *format),
        Command::Trace { episode, input, json } => trace(input, episode, *json),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.downcast_ref::<HarnessError>()
                .is_some_and(|h| matches!(h, HarnessError::PartialFailure { .. }))
            {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
