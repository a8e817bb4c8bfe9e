use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use seqchart_core::chart::{Outcome, Statechart};
use seqchart_core::compiler::{compile, CompilationMap};
use seqchart_core::content::{parse_manifest, ActivityTree};
use seqchart_core::sim::{explore, population_stats, run_session, ExploreError, ExploreOptions, LearnerPolicy};
use seqchart_core::strategy::{apply, StrategyPipeline};

use crate::service::SessionService;

/// Exit status for validation and model errors.
pub const EXIT_INVALID: i32 = 1;
/// Exit status for malformed invocations.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "seqchart",
    version,
    about = "Compile, run and analyze statechart-sequenced courses"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ChartInput {
    /// Course manifest (JSON).
    manifest: PathBuf,
    /// Strategy pipeline document: a JSON array of {"name", "params"}.
    #[arg(long)]
    strategy: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a manifest; prints nothing when it is valid.
    Validate { manifest: PathBuf },
    /// Compile a manifest to a statechart document.
    Compile {
        #[command(flatten)]
        input: ChartInput,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write the tree-to-state map here.
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Run one scripted learner and write its trace (JSON lines).
    Simulate {
        #[command(flatten)]
        input: ChartInput,
        /// always-pass | always-fail | constant:S | bernoulli:P[:PASS:FAIL] | improving:START:GAIN:CAP
        #[arg(long)]
        policy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        max_steps: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Exhaustive reachability analysis.
    Explore {
        #[command(flatten)]
        input: ChartInput,
        /// Outcomes the learner may produce.
        #[arg(long, value_delimiter = ',', default_values_t = [OutcomeArg::Passed, OutcomeArg::Failed])]
        outcomes: Vec<OutcomeArg>,
        #[arg(long, default_value_t = 1_000_000)]
        max_nodes: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Aggregate statistics over a population of scripted learners.
    Stats {
        #[command(flatten)]
        input: ChartInput,
        #[arg(long)]
        policy: String,
        #[arg(long, default_value_t = 100)]
        learners: u64,
        /// First seed; learner k uses seed + k.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        max_steps: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the HTTP session service.
    Serve {
        #[arg(long, env = "SEQCHART_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "SEQCHART_CONTENT_DIR")]
        content_dir: PathBuf,
        #[arg(long, env = "SEQCHART_SNAPSHOT_DIR")]
        snapshot_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum OutcomeArg {
    Passed,
    Failed,
}

impl std::fmt::Display for OutcomeArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OutcomeArg::Passed => "passed",
            OutcomeArg::Failed => "failed",
        })
    }
}

enum Failure {
    Invalid(String),
    Usage(String),
}

type CmdResult = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write(output: &Option<PathBuf>, text: &str) -> CmdResult {
    match output {
        Some(p) if p.as_os_str() != "-" => {
            fs::write(p, text).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display())))
        }
        _ => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Invalid(e.to_string())),
    }
}

fn load_tree(path: &Path) -> Result<ActivityTree, Failure> {
    parse_manifest(&read(path)?).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn load_chart(input: &ChartInput) -> Result<(ActivityTree, Statechart, CompilationMap), Failure> {
    let tree = load_tree(&input.manifest)?;
    let (mut chart, map) = compile(&tree).map_err(|e| Failure::Invalid(e.to_string()))?;
    if let Some(path) = &input.strategy {
        let pipeline = StrategyPipeline::from_json(&read(path)?)
            .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
        for s in &pipeline.0 {
            chart = apply(s, &chart, &map).map_err(|e| Failure::Invalid(e.to_string()))?;
        }
    }
    Ok((tree, chart, map))
}

fn execute(cmd: Command) -> CmdResult {
    match cmd {
        Command::Validate { manifest } => load_tree(&manifest).map(|_| ()),
        Command::Compile { input, output, map } => {
            let (_, chart, m) = load_chart(&input)?;
            if let Some(p) = &map {
                write(&Some(p.clone()), &(m.to_json_pretty() + "\n"))?;
            }
            write(&output, &(chart.to_json_pretty() + "\n"))
        }
        Command::Simulate {
            input,
            policy,
            seed,
            max_steps,
            output,
        } => {
            let (_, chart, _) = load_chart(&input)?;
            let policy = LearnerPolicy::parse(&policy, seed).map_err(|e| Failure::Usage(e.to_string()))?;
            if max_steps == 0 {
                return Err(Failure::Usage("--max-steps must be positive".into()));
            }
            let trace = run_session(&chart, &policy, max_steps).map_err(|e| Failure::Invalid(e.to_string()))?;
            write(&output, &trace.to_jsonl())
        }
        Command::Explore {
            input,
            outcomes,
            max_nodes,
            output,
        } => {
            let (_, chart, map) = load_chart(&input)?;
            let opts = ExploreOptions::for_map(&map)
                .with_budget(max_nodes)
                .with_outcomes(outcomes.iter().map(|o| match o {
                    OutcomeArg::Passed => Outcome::Passed,
                    OutcomeArg::Failed => Outcome::Failed,
                }));
            match explore(&chart, &opts) {
                Ok(report) => write(&output, &report.to_json_pretty()),
                Err(ExploreError::BudgetExceeded { budget, partial }) => {
                    write(&output, &partial.to_json_pretty())?;
                    Err(Failure::Invalid(format!(
                        "state space exceeds {budget} nodes; report is partial"
                    )))
                }
                Err(e) => Err(Failure::Invalid(e.to_string())),
            }
        }
        Command::Stats {
            input,
            policy,
            learners,
            seed,
            max_steps,
            output,
        } => {
            let (_, chart, _) = load_chart(&input)?;
            let policy = LearnerPolicy::parse(&policy, seed).map_err(|e| Failure::Usage(e.to_string()))?;
            if learners == 0 || max_steps == 0 {
                return Err(Failure::Usage("--learners and --max-steps must be positive".into()));
            }
            let seeds: Vec<u64> = (0..learners).map(|k| seed.wrapping_add(k)).collect();
            let stats =
                population_stats(&chart, &policy, &seeds, max_steps).map_err(|e| Failure::Invalid(e.to_string()))?;
            write(&output, &stats.to_json_pretty())
        }
        Command::Serve {
            port,
            host,
            content_dir,
            snapshot_dir,
        } => serve(&host, port, content_dir, snapshot_dir),
    }
}

fn serve(host: &str, port: u16, content_dir: PathBuf, snapshot_dir: Option<PathBuf>) -> CmdResult {
    if !content_dir.is_dir() {
        return Err(Failure::Usage(format!("{} is not a directory", content_dir.display())));
    }
    let (service, report) =
        SessionService::open(content_dir, snapshot_dir).map_err(|e| Failure::Invalid(e.to_string()))?;
    for q in &report.quarantined {
        eprintln!(
            "quarantined session {} (line {}): {}",
            q.session_id,
            q.line.map(|l| l.to_string()).unwrap_or_else(|| "?".into()),
            q.reason
        );
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Invalid(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| Failure::Usage(format!("cannot listen on {host}:{port}: {e}")))?;
        if let Ok(addr) = listener.local_addr() {
            eprintln!(
                "listening on http://{addr} ({} sessions recovered)",
                report.recovered.len()
            );
        }
        axum::serve(listener, crate::http::router(Arc::new(service)))
            .await
            .map_err(|e| Failure::Invalid(e.to_string()))
    })
}

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INVALID
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
    }
}
