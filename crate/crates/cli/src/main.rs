use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use rscount::cnf::{encode_task, write_dimacs, CnfTarget};
use rscount::engine::{render_alpha, Arithmetic, DEFAULT_NODE_BUDGET};
use rscount::extremality::{check_extremality, ExtremalityReport, PairSelection};
use rscount::format::{load_beta, load_layer, load_mitigations, load_task};
use rscount::intended::{intended_tally, DEFAULT_WITNESS_CAP};
use rscount::maps::intended_pair_count;
use rscount::metrics::{evaluate, PredictionDump};
use rscount::mitigations::conjoin_multitask;
use rscount::{
    count_with_mitigations, enumerate_optimal_alphas, CountOptions, Error, Method, MitigationSet, Mode,
    SubtrahendPolicy, TaskSpec,
};

#[derive(Parser)]
#[command(name = "rscount", version, about = "Count reasoning shortcuts in discrete concept-based tasks")]
struct Cli {
    /// Structured JSON output instead of tables.
    #[arg(long, global = true)]
    json: bool,
    /// Omit elapsed times so repeated runs are byte-identical.
    #[arg(long, global = true)]
    no_timing: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Count admissible maps, RSs and JRSs.
    Count(CountArgs),
    /// List admissible α's with their forced β.
    Enumerate(EnumerateArgs),
    /// Print the intended-pair subtrahend.
    IntendedCount(IntendedArgs),
    /// Write the optimal-pair constraints as DIMACS CNF.
    ExportCnf(CnfArgs),
    /// Audit an inference layer for extremality.
    CheckExtremality(ExtremalityArgs),
    /// Score a prediction dump.
    Metrics(MetricsArgs),
    /// Run the embedded oracle corpus.
    Selftest,
}

#[derive(Args)]
struct TaskArgs {
    #[arg(long)]
    task: PathBuf,
    /// Mitigations file; without a value, the task file's own block.
    #[arg(long, num_args = 0..=1)]
    mitigations: Option<Option<PathBuf>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Rs,
    Jrs,
    JrsNonredundant,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Auto,
    Naive,
    Pruned,
    Factored,
}

#[derive(Clone, Copy, ValueEnum)]
enum SubtrahendArg {
    Auto,
    ShortcutAware,
    Representable,
    ClosedForm,
}

#[derive(Args)]
struct CountArgs {
    #[command(flatten)]
    task: TaskArgs,
    #[arg(long, value_enum, default_value = "jrs")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "auto")]
    method: MethodArg,
    #[arg(long, env = "RSCOUNT_WORKERS")]
    workers: Option<usize>,
    /// Search node budget (pair budget for the naive method).
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long, value_enum, default_value = "auto")]
    subtrahend: SubtrahendArg,
    #[arg(long, default_value_t = DEFAULT_WITNESS_CAP)]
    witness_cap: u64,
    /// Aggregate in checked 128-bit arithmetic.
    #[arg(long)]
    u128: bool,
}

#[derive(Args)]
struct EnumerateArgs {
    #[command(flatten)]
    task: TaskArgs,
    #[arg(long, default_value_t = 10)]
    limit: usize,
}

#[derive(Args)]
struct IntendedArgs {
    #[command(flatten)]
    task: TaskArgs,
    /// Enumerate the witnesses the α-family can represent.
    #[arg(long)]
    family_aware: bool,
    #[arg(long, default_value_t = DEFAULT_WITNESS_CAP)]
    witness_cap: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    OptimalPairs,
    OptimalAlphas,
}

#[derive(Args)]
struct CnfArgs {
    #[command(flatten)]
    task: TaskArgs,
    #[arg(long, value_enum, default_value = "optimal-pairs")]
    target: TargetArg,
    /// Drop β cells no support world can reach.
    #[arg(long)]
    trim_beta: bool,
    /// Output file (standard output if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtremalityArgs {
    #[arg(long)]
    layer: PathBuf,
    #[arg(long, default_value_t = 99)]
    grid: usize,
    /// `all` or a number of sampled pairs.
    #[arg(long, default_value = "all")]
    pairs: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    dump: PathBuf,
    #[arg(long)]
    task: PathBuf,
    #[arg(long)]
    beta: Option<PathBuf>,
}

type CliResult = Result<ExitCode, Error>;

fn load(args: &TaskArgs) -> Result<(TaskSpec, MitigationSet), Error> {
    let (task, block) = load_task(&args.task)?;
    let ms = match &args.mitigations {
        None => MitigationSet::none(),
        Some(None) => block.unwrap_or_default(),
        Some(Some(p)) => load_mitigations(p, &task)?,
    };
    Ok((task, ms))
}

fn emit(text: &str) -> io::Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        out.write_all(b"\n")?;
    }
    out.flush()
}

fn emit_json(v: &serde_json::Value) -> io::Result<()> {
    emit(&serde_json::to_string_pretty(v).expect("json values serialize"))
}

fn count(cli: &Cli, a: &CountArgs) -> CliResult {
    let (task, ms) = load(&a.task)?;
    let mut opts = CountOptions {
        mode: match a.mode {
            ModeArg::Rs => Mode::Rs,
            ModeArg::Jrs => Mode::Jrs,
            ModeArg::JrsNonredundant => Mode::JrsNonredundant,
        },
        method: match a.method {
            MethodArg::Auto => Method::Auto,
            MethodArg::Naive => Method::Naive,
            MethodArg::Pruned => Method::Pruned,
            MethodArg::Factored => Method::Factored,
        },
        budget: a.budget,
        subtrahend: match a.subtrahend {
            SubtrahendArg::Auto => SubtrahendPolicy::Auto,
            SubtrahendArg::ShortcutAware => SubtrahendPolicy::ShortcutAware,
            SubtrahendArg::Representable => SubtrahendPolicy::Representable,
            SubtrahendArg::ClosedForm => SubtrahendPolicy::ClosedForm,
        },
        witness_cap: a.witness_cap,
        arithmetic: if a.u128 { Arithmetic::CheckedU128 } else { Arithmetic::BigInt },
        ..CountOptions::default()
    };
    if let Some(w) = a.workers {
        opts = opts.with_workers(w);
    }
    let report = count_with_mitigations(&task, &ms, &opts)?;
    if cli.json {
        emit_json(&report.to_json(!cli.no_timing))?;
    } else {
        emit(&report.to_table(!cli.no_timing))?;
    }
    if !report.exact {
        eprintln!("budget exceeded: counts are lower bounds (raise --budget, default {DEFAULT_NODE_BUDGET})");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn enumerate(cli: &Cli, a: &EnumerateArgs) -> CliResult {
    let (task, ms) = load(&a.task)?;
    let e = enumerate_optimal_alphas(&task, &ms, a.limit)?;
    if cli.json {
        emit_json(&e.to_json(&task))?;
        return Ok(ExitCode::SUCCESS);
    }
    let mut s = format!("task {}\n", &task.digest()[..16]);
    for (i, entry) in e.entries.iter().enumerate() {
        s += &format!("#{} alpha\n", i + 1);
        for line in render_alpha(&task, &entry.alpha) {
            s += &format!("  {line}\n");
        }
        let forced: Vec<String> = entry
            .beta
            .cells()
            .iter()
            .enumerate()
            .filter_map(|(c, y)| y.map(|y| format!("{}={y}", task.space.world_at(c))))
            .collect();
        s += &format!("  beta {} (free cells: {})\n", forced.join(" "), entry.beta.free_cells());
    }
    s += &format!("{} entries{}\n", e.entries.len(), if e.truncated { " (truncated)" } else { "" });
    emit(&s)?;
    Ok(ExitCode::SUCCESS)
}

fn intended(cli: &Cli, a: &IntendedArgs) -> CliResult {
    let (task, ms) = load(&a.task)?;
    let closed = intended_pair_count(&task.space);
    let mut v = json!({
        "task_digest": task.digest(),
        "closed_form": closed.to_string(),
    });
    if a.family_aware {
        let conj = conjoin_multitask(&task, &ms)?;
        let w = intended_tally(&conj, &ms, a.witness_cap)?.ok_or_else(|| {
            Error::BudgetExceeded(format!("witness enumeration exceeds the cap {}", a.witness_cap))
        })?;
        v["witnesses"] = json!(w.witnesses.to_string());
        v["representable_redundant"] = json!(w.representable_redundant.to_string());
        v["representable_nonredundant"] = json!(w.representable_nonredundant.to_string());
        v["shortcut_aware_redundant"] = json!(w.shortcut_aware_redundant.to_string());
        v["shortcut_aware_nonredundant"] = json!(w.shortcut_aware_nonredundant.to_string());
        v["rs_with_witness"] = json!(w.rs_intended.to_string());
    }
    if cli.json {
        emit_json(&v)?;
    } else {
        let mut s = String::new();
        for (k, x) in v.as_object().unwrap() {
            s += &format!("{:<28}{}\n", k, x.as_str().unwrap_or_default());
        }
        emit(&s)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn export_cnf(a: &CnfArgs) -> CliResult {
    let (task, ms) = load(&a.task)?;
    let target = match a.target {
        TargetArg::OptimalPairs => CnfTarget::OptimalPairs,
        TargetArg::OptimalAlphas => CnfTarget::OptimalAlphas,
    };
    let f = encode_task(&task, &ms, target, a.trim_beta)?;
    match &a.out {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            write_dimacs(&f, &mut w)?;
            w.flush()?;
            eprintln!("wrote {} variables, {} clauses to {}", f.num_vars(), f.clauses().len(), p.display());
        }
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            write_dimacs(&f, &mut w)?;
            w.flush()?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn extremality_table(r: &ExtremalityReport) -> String {
    let mut s = String::new();
    let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.6e}"));
    s += &format!("{:<20}{}\n", "satisfied", r.satisfied);
    s += &format!("{:<20}{}\n", "vacuous", r.vacuous);
    s += &format!("{:<20}{}\n", "worst violation", fmt(r.worst_violation));
    if let Some(p) = &r.worst_pair {
        s += &format!("{:<20}{} {} lambda={:.6}\n", "worst pair", p.c, p.c2, p.lambda);
    }
    s += &format!("{:<20}{} of {}\n", "pairs scanned", r.pairs_scanned, r.eligible_pairs);
    s += &format!("{:<20}{}\n", "grid points", r.grid_points);
    s += &format!(
        "{:<20}{} strict, {} boundary, {} violated\n",
        "pairs", r.strict_pairs, r.boundary_pairs, r.violated_pairs
    );
    s += &format!("{:<20}{:.6}\n", "fraction satisfied", r.fraction_satisfied);
    for w in &r.warnings {
        s += &format!("warning: {w}\n");
    }
    s
}

fn extremality(cli: &Cli, a: &ExtremalityArgs) -> CliResult {
    let layer = load_layer(&a.layer)?;
    let pairs = match a.pairs.as_str() {
        "all" => PairSelection::All,
        n => PairSelection::Sample {
            n: n.parse().map_err(|_| Error::Validation(format!("--pairs expects `all` or a count, got `{n}`")))?,
            seed: a.seed,
        },
    };
    let r = check_extremality(&layer, a.grid, pairs)?;
    if cli.json {
        emit_json(&serde_json::to_value(&r).expect("report serializes"))?;
    } else {
        emit(&extremality_table(&r))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn metrics(cli: &Cli, a: &MetricsArgs) -> CliResult {
    let (task, _) = load_task(&a.task)?;
    let dump = PredictionDump::from_csv(open(&a.dump, "dump")?, &task)?;
    let beta = a.beta.as_ref().map(|p| load_beta(p, &task.space)).transpose()?;
    let r = evaluate(&dump, beta.as_ref())?;
    if cli.json {
        emit_json(&r.to_json(&task.digest()))?;
    } else {
        emit(&r.to_table(&task.digest()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn open(p: &Path, what: &str) -> Result<File, Error> {
    File::open(p).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => Error::Validation(format!("{what} file not found: {}", p.display())),
        _ => Error::Io(e),
    })
}

fn selftest(cli: &Cli) -> CliResult {
    let results = rscount::corpus::selftest(2_000_000);
    let mut failed = None;
    let mut lines = Vec::new();
    for r in &results {
        let status = if r.passed() { "pass" } else { "FAIL" };
        lines.push(json!({
            "property": r.name,
            "status": status,
            "checked": r.checked,
            "skipped": r.skipped,
            "failure": r.failure,
        }));
        if !cli.json {
            println!("{status} {} ({} checked, {} skipped)", r.name, r.checked, r.skipped);
        }
        if let Some(f) = &r.failure {
            failed.get_or_insert_with(|| f.clone());
        }
    }
    if cli.json {
        emit_json(&json!({ "properties": lines }))?;
    }
    match failed {
        Some(f) => {
            eprintln!("selftest mismatch: {f}");
            Ok(ExitCode::from(2))
        }
        None => Ok(ExitCode::SUCCESS),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match &cli.cmd {
        Cmd::Count(a) => count(&cli, a),
        Cmd::Enumerate(a) => enumerate(&cli, a),
        Cmd::IntendedCount(a) => intended(&cli, a),
        Cmd::ExportCnf(a) => export_cnf(a),
        Cmd::CheckExtremality(a) => extremality(&cli, a),
        Cmd::Metrics(a) => metrics(&cli, a),
        Cmd::Selftest => selftest(&cli),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::BudgetExceeded(_) | Error::SpaceTooLarge(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
