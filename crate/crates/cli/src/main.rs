use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{DateTime, NaiveDate, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use kpdebate::config::{ClockMode, ConfigError, PartialConfig, RunConfig, SearchKind};
use kpdebate::debate::Strictness;
use kpdebate::guideline::factor_table_json;
use kpdebate::metrics::{build_tree_from_report, compute_rei, load_tree, ReportInput};
use kpdebate::nas::{post_process, SearchMode};
use kpdebate::orchestrator::{read_json, replay, run_many, Command, ErrorCategory, RunError, Runtime};
use kpdebate::pool::{CompanyId, KnowledgePool};
use kpdebate::report::parse_report;
use kpdebate::runtime::BackendMode;
use kpdebate::stats::{
    latency_summary, median, read_latency, read_pairs, read_sus, wilcoxon_signed_rank, Method, StatsError,
};

#[derive(Parser)]
#[command(name = "kpdebate", version, args_override_self = true, about = "Debate-based and single-pass credit analysis over non-financial evidence")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate pool documents and report accepted and rejected records
    Ingest(IngestArgs),
    /// Single-pass analysis report
    Nas(RunArgs),
    /// Ten-step structured debate plus the summary report
    Debate(RunArgs),
    /// Breadth, depth and REI of reasoning trees
    Rei(ReiArgs),
    /// Paired tests and descriptive statistics for evaluation data
    Stats {
        #[command(subcommand)]
        which: StatsCmd,
    },
    /// Re-execute a journaled run and compare artifacts
    Replay(ReplayArgs),
    /// Print the factor guideline table
    Factors,
}

#[derive(Args)]
struct IngestArgs {
    /// Directory of company JSON documents
    #[arg(long)]
    pool: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Scripted,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum SearchArg {
    None,
    Static,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum SearchModeArg {
    Always,
    IfSparse,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClockArg {
    Wall,
    Fixed,
}

#[derive(Args)]
struct RunArgs {
    /// Company id, or a comma-separated list
    #[arg(long, value_delimiter = ',', required = true)]
    company: Vec<String>,
    /// Sessions run at once when several companies are given
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// JSON config file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    recency_days: Option<u32>,
    #[arg(long)]
    max_search: Option<usize>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Scripted transcript for the scripted backend
    #[arg(long)]
    script: Option<PathBuf>,
    /// Chat-completions URL for the remote backend
    #[arg(long)]
    endpoint: Option<String>,
    /// Environment variable holding the API key
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    /// Search provider
    #[arg(long = "search", value_enum)]
    search_provider: Option<SearchArg>,
    /// JSON array of search hits for the static provider
    #[arg(long)]
    search_file: Option<PathBuf>,
    #[arg(long)]
    search_endpoint: Option<String>,
    /// When the analysis pipeline searches
    #[arg(long, value_enum)]
    search_mode: Option<SearchModeArg>,
    #[arg(long)]
    locale: Option<String>,
    /// Output directory for run folders
    #[arg(long)]
    out: Option<PathBuf>,
    /// Knowledge pool directory
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Directory with edited prompt templates
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Abort on a hard violation (default)
    #[arg(long, conflicts_with = "record_only")]
    strict: bool,
    /// Record hard violations and keep going
    #[arg(long)]
    record_only: bool,
    #[arg(long, value_enum)]
    clock: Option<ClockArg>,
    /// Instant used by the fixed clock
    #[arg(long)]
    fixed_time: Option<DateTime<Utc>>,
    /// Recency reference date, defaults to the clock's today
    #[arg(long)]
    as_of: Option<NaiveDate>,
    /// Let the aggregator agent rewrite the summary prose
    #[arg(long)]
    polish: bool,
    #[arg(long)]
    run_id: Option<String>,
}

#[derive(Args)]
struct ReiArgs {
    /// Hand-authored reasoning tree
    #[arg(long, num_args = 1.., required_unless_present = "report")]
    tree: Vec<PathBuf>,
    /// Build a heuristic tree from a NAS or debate summary report instead
    #[arg(long, num_args = 1..)]
    report: Vec<PathBuf>,
    /// Print a JSON object instead of text
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Normal,
    Exact,
}

#[derive(Subcommand)]
enum StatsCmd {
    /// Wilcoxon signed-rank test on unit_id,score_nas,score_kpd
    Wilcoxon {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "normal")]
        method: MethodArg,
    },
    /// SUS scores from unit_id,system,q1..q10
    Sus {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Per-system latency means from system,company,seconds
    Latency {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Medians of both columns of a paired CSV
    Median {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Args)]
struct ReplayArgs {
    /// Run directory (or its manifest file)
    #[arg(long)]
    journal: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(category: ErrorCategory, message: impl Into<String>) -> Self {
        Self { code: category.exit_code() as u8, message: message.into() }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Self::new(e.category(), e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::new(ErrorCategory::Config, e.to_string())
    }
}

impl From<StatsError> for Failure {
    fn from(e: StatsError) -> Self {
        Self::new(ErrorCategory::Validation, e.to_string())
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(ErrorCategory::Config, format!("{}: {e}", path.display()))
}

fn absolute(base: &Path, p: Option<PathBuf>) -> Option<PathBuf> {
    p.map(|p| if p.is_absolute() { p } else { base.join(p) })
}

/// Relative paths are resolved against `base` so a recorded config stays
/// valid from any working directory.
fn anchor(mut c: PartialConfig, base: &Path) -> PartialConfig {
    c.script = absolute(base, c.script);
    c.search_file = absolute(base, c.search_file);
    c.out_dir = absolute(base, c.out_dir);
    c.pool_dir = absolute(base, c.pool_dir);
    c.templates_dir = absolute(base, c.templates_dir);
    c
}

fn cli_layer(a: &RunArgs) -> PartialConfig {
    PartialConfig {
        recency_days: a.recency_days,
        max_search: a.max_search,
        model_id: a.model.clone(),
        backend: a.backend.map(|b| match b {
            BackendArg::Scripted => BackendMode::Scripted,
            BackendArg::Remote => BackendMode::Remote,
        }),
        script: a.script.clone(),
        endpoint: a.endpoint.clone(),
        api_key_env: a.api_key_env.clone(),
        timeout_secs: a.timeout_secs,
        search: a.search_provider.map(|s| match s {
            SearchArg::None => SearchKind::None,
            SearchArg::Static => SearchKind::Static,
            SearchArg::Http => SearchKind::Http,
        }),
        search_file: a.search_file.clone(),
        search_endpoint: a.search_endpoint.clone(),
        search_mode: a.search_mode.map(|m| match m {
            SearchModeArg::Always => SearchMode::Always,
            SearchModeArg::IfSparse => SearchMode::IfSparse,
        }),
        locale: a.locale.clone(),
        out_dir: a.out.clone(),
        pool_dir: a.pool.clone(),
        templates_dir: a.templates.clone(),
        strictness: match (a.strict, a.record_only) {
            (_, true) => Some(Strictness::RecordOnly),
            (true, _) => Some(Strictness::Strict),
            _ => None,
        },
        clock: a.clock.map(|c| match c {
            ClockArg::Wall => ClockMode::Wall,
            ClockArg::Fixed => ClockMode::Fixed,
        }),
        fixed_time: a.fixed_time,
        as_of: a.as_of,
        polish: a.polish.then_some(true),
    }
}

fn resolve_config(a: &RunArgs, env: &HashMap<String, String>) -> Result<RunConfig, Failure> {
    let cwd = std::env::current_dir().map_err(|e| Failure::new(ErrorCategory::Runtime, e.to_string()))?;
    let env_layer = anchor(PartialConfig::from_env(env)?, &cwd);
    let file_layer = match &a.config {
        Some(path) => {
            let path = absolute(&cwd, Some(path.clone())).expect("some");
            let dir = path.parent().unwrap_or(&cwd).to_path_buf();
            anchor(PartialConfig::from_file(&path)?, &dir)
        }
        None => PartialConfig::default(),
    };
    let cli = anchor(cli_layer(a), &cwd);
    Ok(RunConfig::resolve(env_layer, file_layer, cli)?)
}

fn print_json(v: &Value) {
    use std::io::Write;
    // a closed pipe (e.g. `| head`) is not an error worth reporting
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(v).expect("json"));
}

fn run(command: Command, a: RunArgs) -> Result<(), Failure> {
    let env: HashMap<String, String> = std::env::vars().collect();
    let config = resolve_config(&a, &env)?;
    let rt = Runtime::from_config(config, &env)?;
    let companies: Vec<CompanyId> = a.company.iter().map(|c| CompanyId::new(c.trim())).collect();
    let results = run_many(&rt, command, &companies, a.workers, a.run_id.as_deref());
    let mut first_failure: Option<Failure> = None;
    let mut rows = Vec::new();
    for (company, result) in companies.iter().zip(results) {
        match result {
            Ok(outcome) => {
                let code = outcome.error.as_ref().map_or(0, |e| e.category().exit_code());
                if let Some(e) = outcome.error {
                    eprintln!("{company}: {e}");
                    first_failure.get_or_insert(e.into());
                }
                rows.push(json!({
                    "company": company,
                    "run_dir": outcome.run_dir,
                    "manifest": outcome.manifest_path,
                    "status": outcome.manifest.status,
                    "exit_code": code,
                }));
            }
            Err(e) => {
                eprintln!("{company}: {e}");
                rows.push(json!({"company": company, "error": e.to_string(), "exit_code": e.category().exit_code()}));
                first_failure.get_or_insert(e.into());
            }
        }
    }
    print_json(&Value::Array(rows));
    match first_failure {
        Some(f) => Err(Failure { message: String::new(), ..f }),
        None => Ok(()),
    }
}

fn ingest(a: IngestArgs) -> Result<(), Failure> {
    let (_, outcomes) = KnowledgePool::load_dir(&a.pool).map_err(|e| Failure::new(ErrorCategory::Validation, e.to_string()))?;
    let rows: Vec<Value> = outcomes
        .iter()
        .map(|o| json!({"company_id": o.company_id, "accepted": o.items.len(), "rejections": o.rejections}))
        .collect();
    print_json(&Value::Array(rows));
    Ok(())
}

fn rei(a: ReiArgs) -> Result<(), Failure> {
    let mut rows = Vec::new();
    for path in &a.tree {
        let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
        let tree = load_tree(&text).map_err(|e| Failure::new(ErrorCategory::Validation, format!("{}: {e}", path.display())))?;
        rows.push((path.clone(), compute_rei(&tree), false));
    }
    for path in &a.report {
        let value = read_json(path)?;
        let tree = if value.get("Analysis Summary").is_some() {
            let report = post_process(&value.to_string())
                .map_err(|e| Failure::new(ErrorCategory::Validation, format!("{}: {e}", path.display())))?;
            build_tree_from_report(ReportInput::Analysis(&report))
        } else {
            let report =
                parse_report(&value).map_err(|e| Failure::new(ErrorCategory::Validation, format!("{}: {e}", path.display())))?;
            build_tree_from_report(ReportInput::Debate(&report))
        };
        rows.push((path.clone(), compute_rei(&tree), true));
    }
    if a.json {
        let out: Vec<Value> = rows
            .iter()
            .map(|(p, r, h)| json!({"file": p, "breadth": r.breadth, "depth_profile": r.depth_profile, "rei": r.rei, "heuristic": h}))
            .collect();
        print_json(&Value::Array(out));
    } else {
        for (p, r, h) in rows {
            let depths: Vec<String> = r.depth_profile.iter().map(usize::to_string).collect();
            let tag = if h { " (heuristic)" } else { "" };
            println!("{}: REI {} breadth {} depths [{}]{tag}", p.display(), r.rei, r.breadth, depths.join(","));
        }
    }
    Ok(())
}

fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| io_failure(path, e))
}

fn stats(which: StatsCmd) -> Result<(), Failure> {
    let out = match which {
        StatsCmd::Wilcoxon { input, method } => {
            let pairs = read_pairs(open(&input)?)?;
            let method = match method {
                MethodArg::Normal => Method::NormalApprox,
                MethodArg::Exact => Method::Exact,
            };
            serde_json::to_value(wilcoxon_signed_rank(&pairs, method)?).expect("json")
        }
        StatsCmd::Sus { input } => {
            let rows = read_sus(open(&input)?)?;
            let mut by_system: std::collections::BTreeMap<&str, Vec<f64>> = Default::default();
            for r in &rows {
                by_system.entry(&r.system).or_default().push(r.score);
            }
            let medians: serde_json::Map<String, Value> = by_system
                .iter()
                .map(|(s, v)| Ok((s.to_string(), json!(median(v)?))))
                .collect::<Result<_, StatsError>>()?;
            json!({"scores": rows, "median": medians})
        }
        StatsCmd::Latency { input } => {
            serde_json::to_value(latency_summary(&read_latency(open(&input)?)?)?).expect("json")
        }
        StatsCmd::Median { input } => {
            let pairs = read_pairs(open(&input)?)?;
            let a: Vec<f64> = pairs.iter().map(|p| p.score_a).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.score_b).collect();
            json!({"score_nas": median(&a)?, "score_kpd": median(&b)?, "n": pairs.len()})
        }
    };
    print_json(&out);
    Ok(())
}

fn do_replay(a: ReplayArgs) -> Result<(), Failure> {
    let report = replay(&a.journal)?;
    print_json(&serde_json::to_value(&report).expect("json"));
    if report.identical {
        Ok(())
    } else {
        Err(Failure::new(ErrorCategory::Runtime, "replayed artifacts differ from the recorded run"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Ingest(a) => ingest(a),
        Cmd::Nas(a) => run(Command::Nas, a),
        Cmd::Debate(a) => run(Command::Debate, a),
        Cmd::Rei(a) => rei(a),
        Cmd::Stats { which } => stats(which),
        Cmd::Replay(a) => do_replay(a),
        Cmd::Factors => {
            print_json(&factor_table_json());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
