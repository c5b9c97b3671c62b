use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use seriesqa::agent::{deserialize_trace, run_with_backend, trace_to_string, AgentConfig, AgentResult, Outcome};
use seriesqa::harness::{
    dataset_to_jsonl, generate_synthetic, load_dataset, replay_case_study, run_benchmark, BenchBackend, BenchOptions,
    BenchQuestion, Category, Policy, RecordStatus,
};
use seriesqa::llm::BackendConfig;
use seriesqa::series::{SeriesFormat, SeriesStore};
use seriesqa::toolkit::Toolkit;

/// `println!` that stops quietly when stdout is closed (e.g. piped to `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "seriesqa",
    version,
    about = "Tool-grounded question answering over time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one question about one or more series files.
    Ask(AskArgs),
    /// Score the agent on a dataset or on synthetic questions.
    Bench(BenchArgs),
    /// Write a synthetic dataset as JSONL.
    Gen(GenArgs),
    /// Print the tool catalog as JSON.
    Tools,
    /// Inspect trace files.
    Trace {
        #[command(subcommand)]
        command: TraceCommand,
    },
    /// Replay the bundled solar cloudy-week trajectory and check its stages.
    Replay {
        /// Write the replay trace here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TraceCommand {
    /// Pretty-print a trace file.
    Show {
        path: PathBuf,
        /// Print the normalized JSON instead of the step listing.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Http,
    Scripted,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "scripted")]
    backend: BackendKind,
    /// OpenAI-compatible chat completions endpoint.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Scripted fixture: a JSON file for `ask`, a directory of `<id>.json`
    /// files for `bench`.
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Reasoning-step budget.
    #[arg(long, default_value_t = seriesqa::agent::DEFAULT_BUDGET)]
    budget: usize,
}

impl BackendArgs {
    fn http(&self) -> Result<BackendConfig> {
        let endpoint = self
            .endpoint
            .clone()
            .ok_or_else(|| anyhow!("--backend http needs --endpoint"))?;
        let model = self
            .model
            .clone()
            .ok_or_else(|| anyhow!("--backend http needs --model"))?;
        Ok(BackendConfig::http(endpoint, model))
    }
}

#[derive(Args)]
struct AskArgs {
    question: String,
    /// Series file as `NAME=PATH` or `PATH` (named after the file stem).
    #[arg(long = "series", required = true)]
    series: Vec<String>,
    #[command(flatten)]
    backend: BackendArgs,
    /// Trace file to write.
    #[arg(long, default_value = "trace.json")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// JSONL dataset, one question per line.
    #[arg(long, conflicts_with = "synthetic")]
    dataset: Option<PathBuf>,
    /// Synthetic questions as `category×count` (or `category:count`); `all`
    /// selects every category. Repeatable or comma-separated.
    #[arg(long, value_delimiter = ',')]
    synthetic: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Built-in scripted policy, used when no fixture directory is given.
    #[arg(long, default_value = "ideal")]
    policy: String,
    #[command(flatten)]
    backend: BackendArgs,
    /// Output directory for report.json, report.txt and traces/.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Zero every series while keeping names and lengths.
    #[arg(long)]
    withhold_series: bool,
    /// Worker threads; 0 uses all cores. Defaults to 1 for scripted
    /// backends and 0 for http.
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Args)]
struct GenArgs {
    /// Same syntax as `bench --synthetic`.
    #[arg(long, value_delimiter = ',', required = true)]
    synthetic: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parse `category×count`, `category:count` or `category*count`.
fn parse_synthetic(specs: &[String], seed: u64) -> Result<Vec<BenchQuestion>> {
    let mut questions = Vec::new();
    for spec in specs {
        let (cat, count) = spec
            .split_once(['×', ':', '*'])
            .ok_or_else(|| anyhow!("synthetic spec '{spec}' is not category×count"))?;
        let count: usize = count.trim().parse().with_context(|| format!("bad count in '{spec}'"))?;
        let cats: Vec<Category> = match cat.trim() {
            "all" => Category::ALL.to_vec(),
            c => vec![c.parse()?],
        };
        for c in cats {
            questions.extend(generate_synthetic(c, count, seed));
        }
    }
    Ok(questions)
}

fn load_store(specs: &[String]) -> Result<SeriesStore> {
    let mut store = SeriesStore::new();
    for spec in specs {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let stem = p
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .ok_or_else(|| anyhow!("no file name in '{spec}'"))?;
                (stem.to_string(), p)
            }
        };
        let format = SeriesFormat::from_path(&path).unwrap_or(SeriesFormat::Csv);
        store.load(&path, format, &name)?;
    }
    Ok(store)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn ask(args: AskArgs) -> Result<u8> {
    let store = load_store(&args.series)?;
    let config = match args.backend.backend {
        BackendKind::Scripted => {
            let fixture = args
                .backend
                .fixture
                .clone()
                .ok_or_else(|| anyhow!("--backend scripted needs --fixture"))?;
            BackendConfig::scripted(fixture)
        }
        BackendKind::Http => args.backend.http()?,
    };
    let mut backend = config.connect()?;
    let result = run_with_backend(
        &args.question,
        store,
        &mut backend,
        AgentConfig::with_budget(args.backend.budget),
    )?;
    write_file(&args.out, &trace_to_string(&result))?;
    say!("trace: {}", args.out.display());
    Ok(report_outcome(&result))
}

fn report_outcome(result: &AgentResult) -> u8 {
    match &result.outcome {
        Outcome::Answer { answer, .. } => {
            say!("Final Answer: {answer}");
            0
        }
        Outcome::Failure { reasons } => {
            say!("AGENT_FAILURE");
            for r in reasons {
                say!("- {}", r.describe());
            }
            EXIT_FAILURE
        }
    }
}

fn bench(args: BenchArgs) -> Result<u8> {
    let questions = match &args.dataset {
        Some(path) => load_dataset(path)?,
        None if args.synthetic.is_empty() => bail!("bench needs --dataset or --synthetic"),
        None => parse_synthetic(&args.synthetic, args.seed)?,
    };
    let (backend, default_threads) = match args.backend.backend {
        BackendKind::Http => (BenchBackend::Config(args.backend.http()?), 0),
        BackendKind::Scripted => match &args.backend.fixture {
            Some(dir) => (BenchBackend::FixtureDir(dir.clone()), 1),
            None => (
                BenchBackend::Policy(args.policy.parse::<Policy>().map_err(|e| anyhow!(e))?),
                1,
            ),
        },
    };
    let options = BenchOptions {
        budget: args.backend.budget,
        parallelism: args.parallelism.unwrap_or(default_threads),
        trace_dir: args.out.as_ref().map(|d| d.join("traces")),
        withhold_series: args.withhold_series,
    };
    let report = run_benchmark(&questions, &backend, &options)?;
    let table = report.render_table();
    if let Some(dir) = &args.out {
        write_file(&dir.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
        write_file(&dir.join("report.txt"), &table)?;
    }
    say!("{}", table.trim_end());
    let errored: Vec<&str> = report
        .records
        .iter()
        .filter(|r| r.status == RecordStatus::Error)
        .map(|r| r.id.as_str())
        .collect();
    if !errored.is_empty() {
        for r in report.records.iter().filter(|r| r.status == RecordStatus::Error) {
            eprintln!("{}: {}", r.id, r.error.as_deref().unwrap_or("error"));
        }
        eprintln!("{} of {} questions errored", errored.len(), report.n);
        return Ok(EXIT_USAGE);
    }
    Ok(0)
}

fn gen(args: GenArgs) -> Result<u8> {
    let text = dataset_to_jsonl(&parse_synthetic(&args.synthetic, args.seed)?);
    match &args.out {
        Some(path) => write_file(path, &text)?,
        None => say!("{}", text.trim_end()),
    }
    Ok(0)
}

fn show(path: &Path, json: bool) -> Result<u8> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let result = deserialize_trace(&text).with_context(|| format!("parsing {}", path.display()))?;
    if json {
        say!("{}", trace_to_string(&result));
        return Ok(0);
    }
    say!("Question: {}", result.trace.question);
    say!("Intent: {} ({})", result.intent.task, result.intent.schema.describe());
    for step in &result.trace.steps {
        say!("\n[step {}]", step.k);
        say!("{}", step.block().render());
        if let Some(g) = &step.gate {
            say!("Gate: {:?}", g.verdict);
        }
    }
    say!(
        "\nsteps {}, gate rounds {}, llm calls {}, evidence entries {}",
        result.trace.steps.len(),
        result.gate_rounds,
        result.llm_calls,
        result.log.len()
    );
    Ok(report_outcome(&result))
}

fn replay(out: Option<PathBuf>) -> Result<u8> {
    let report = replay_case_study()?;
    for s in &report.stages {
        say!(
            "stage {} {}: {}",
            s.stage,
            s.name,
            if s.passed { "pass" } else { "FAIL" }
        );
        say!("  {}", s.detail);
    }
    if let Some(path) = out {
        write_file(&path, &trace_to_string(&report.result))?;
    }
    Ok(if report.passed() { 0 } else { EXIT_FAILURE })
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Ask(a) => ask(a),
        Command::Bench(b) => bench(b),
        Command::Gen(g) => gen(g),
        Command::Tools => {
            say!("{}", serde_json::to_string_pretty(&Toolkit::new().catalog())?);
            Ok(0)
        }
        Command::Trace {
            command: TraceCommand::Show { path, json },
        } => show(&path, json),
        Command::Replay { out } => replay(out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
