//! `kgbench`: audit, correct, train, evaluate and compare link-prediction benchmarks.
//!
//! Exit codes: 0 success, 1 reference check failed, 3 OOV present (audit),
//! 64 usage, 65 malformed input, 66 missing input, 70 training diverged,
//! 73 refused output location, 74 I/O or vocabulary mismatch.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use kgbench::audit::{self, reference};
use kgbench::evaluation::{Direction, EvalSettings, Evaluator, MetricsReport, OovPolicy, TiePolicy};
use kgbench::ingest::{self, DatasetLayout, LoadOptions, Separator};
use kgbench::models::checkpoint::Checkpoint;
use kgbench::models::ModelKind;
use kgbench::stats::{self, Comparison, ZeroPolicy};
use kgbench::training::{self, LossKind, OptimizerKind, TrainConfig};
use kgbench::{Error, SplitDataset, SplitKind};

const DATA_ENV: &str = "KGBENCH_DATA";

const EXIT_REFERENCE: u8 = 1;
const EXIT_OOV: u8 = 3;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;
const EXIT_NO_INPUT: u8 = 66;
const EXIT_SOFTWARE: u8 = 70;
const EXIT_CANT_CREATE: u8 = 73;
const EXIT_IO: u8 = 74;

#[derive(Parser)]
#[command(name = "kgbench", version, about = "Link-prediction benchmark auditing and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report split statistics and out-of-vocabulary entities/relations
    Audit(AuditArgs),
    /// Write a copy of a dataset without OOV-affected valid/test triples
    Correct(CorrectArgs),
    /// Train an embedding model and write a checkpoint
    Train(TrainArgs),
    /// Filtered link or relation prediction metrics for a checkpoint
    Eval(EvalArgs),
    /// Wilcoxon signed-rank comparison of two report sets or a shipped table
    Compare(CompareArgs),
    /// Wilcoxon signed-rank tests over a fixture-format CSV
    Stats(StatsArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Dataset directory with train.txt, valid.txt and test.txt. Relative
    /// paths that do not exist are looked up under $KGBENCH_DATA.
    #[arg(long)]
    data: Option<PathBuf>,

    /// Field separator
    #[arg(long, default_value = "tab")]
    sep: Separator,

    /// Drop repeated triples within a split instead of failing
    #[arg(long)]
    dedup: bool,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Write the report as JSON
    #[arg(long)]
    json: Option<PathBuf>,

    /// Write the report as markdown
    #[arg(long)]
    md: Option<PathBuf>,

    /// Report name (defaults to the directory name)
    #[arg(long)]
    name: Option<String>,

    /// Check against published statistics: wn18rr, fb15k-237, yago3-10
    #[arg(long)]
    reference: Option<String>,
}

#[derive(Args)]
struct CorrectArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Output directory
    #[arg(long)]
    out: PathBuf,

    /// Write into a non-empty output directory
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,

    /// TOML training configuration; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    /// Add inverse triples `(t, r_inv, h)` to the training split
    #[arg(long)]
    reciprocal: bool,
    #[arg(long)]
    seed: Option<u64>,

    /// Checkpoint output path
    #[arg(long)]
    checkpoint: PathBuf,

    /// Per-epoch mean loss as CSV
    #[arg(long)]
    loss_csv: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,

    #[arg(long)]
    checkpoint: PathBuf,

    #[arg(long, default_value = "test")]
    split: SplitKind,

    #[arg(long, default_value = "include")]
    oov_policy: OovPolicy,

    #[arg(long, default_value = "entity")]
    direction: Direction,

    /// mean, opt or pess
    #[arg(long, default_value = "mean")]
    tie: TiePolicy,

    /// Print per-relation MRR
    #[arg(long)]
    per_relation: bool,

    #[arg(long, default_value_t = 1)]
    threads: usize,

    /// Write the report as JSON (printed to stdout otherwise)
    #[arg(long)]
    json: Option<PathBuf>,

    /// Write a markdown table row
    #[arg(long)]
    md: Option<PathBuf>,

    /// Model name in the report (defaults to the model kind)
    #[arg(long)]
    model_name: Option<String>,
}

#[derive(Args)]
struct CompareArgs {
    /// Shipped table: wn18rr, fb15k-237 or yago3-10
    #[arg(long, conflicts_with_all = ["before", "after"])]
    fixtures: Option<String>,

    /// Reports on the original dataset (report JSON or an array of them)
    #[arg(long, num_args = 1.., requires = "after")]
    before: Vec<PathBuf>,

    /// Reports on the corrected dataset
    #[arg(long, num_args = 1.., requires = "before")]
    after: Vec<PathBuf>,

    /// Leave a model out of the fixture pairs (repeatable)
    #[arg(long)]
    exclude_model: Vec<String>,

    #[arg(long, default_value = "discard")]
    zero_policy: ZeroPolicy,

    #[arg(long)]
    json: Option<PathBuf>,

    #[arg(long)]
    md: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// CSV with columns dataset, model, metric, original, corrected
    /// (defaults to the shipped tables)
    #[arg(long)]
    csv: Option<PathBuf>,

    /// Only this dataset
    #[arg(long)]
    dataset: Option<String>,

    #[arg(long)]
    exclude_model: Vec<String>,

    #[arg(long, default_value = "discard")]
    zero_policy: ZeroPolicy,

    #[arg(long)]
    json: Option<PathBuf>,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) => EXIT_USAGE,
        Error::MissingFile(_) => EXIT_NO_INPUT,
        Error::OutputNotEmpty(_) | Error::OutputIsInput(_) => EXIT_CANT_CREATE,
        Error::Io { .. } | Error::VocabMismatch { .. } => EXIT_IO,
        Error::NonFiniteLoss { .. } => EXIT_SOFTWARE,
        _ => EXIT_DATA,
    }
}

fn resolve_data(arg: &Option<PathBuf>) -> Result<PathBuf, Error> {
    let root = std::env::var_os(DATA_ENV).map(PathBuf::from);
    match (arg, root) {
        (Some(dir), _) if dir.exists() || dir.is_absolute() => Ok(dir.clone()),
        (Some(dir), Some(root)) => Ok(root.join(dir)),
        (Some(dir), None) => Ok(dir.clone()),
        (None, Some(root)) => Ok(root),
        (None, None) => Err(Error::InvalidConfig(format!("--data not given and ${DATA_ENV} not set"))),
    }
}

fn load(args: &DataArgs) -> Result<(SplitDataset, PathBuf), Error> {
    let dir = resolve_data(&args.data)?;
    let layout = DatasetLayout::new(&dir).with_separator(args.sep);
    let dataset = ingest::load_dataset(&layout, LoadOptions { dedup: args.dedup })?;
    Ok((dataset, dir))
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

fn dir_name(dir: &Path) -> String {
    dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| dir.display().to_string())
}

fn cmd_audit(args: &AuditArgs) -> Result<u8, Error> {
    let (dataset, dir) = load(&args.data)?;
    let name = args.name.clone().unwrap_or_else(|| dir_name(&dir));
    let report = audit::overview_report(&dataset, &name);
    let md = report.to_markdown();
    print!("{md}");
    if let Some(path) = &args.md {
        write_text(path, &md)?;
    }
    if let Some(path) = &args.json {
        write_text(path, &to_json(&report)?)?;
    }

    if let Some(wanted) = &args.reference {
        let reference = reference::Reference::find(wanted).ok_or_else(|| Error::InvalidConfig(format!("no reference named {wanted:?}")))?;
        let checks = reference::check(&report, reference);
        println!("\nReference check against {}:", reference.name);
        for c in &checks {
            println!(
                "{} {}: expected {} observed {} (tolerance {})",
                if c.pass { "PASS" } else { "FAIL" },
                c.row,
                c.expected,
                c.observed,
                c.tolerance
            );
        }
        if checks.iter().any(|c| !c.pass) {
            return Ok(EXIT_REFERENCE);
        }
    }
    Ok(if report.has_oov() { EXIT_OOV } else { 0 })
}

fn cmd_correct(args: &CorrectArgs) -> Result<u8, Error> {
    let (dataset, _) = load(&args.data)?;
    let oov = audit::detect_oov(&dataset);
    let summary = ingest::write_corrected(&dataset, &oov, &args.out, args.force)?;
    for (kind, counts) in &summary.manifest.counts {
        println!("{kind}: {} triples, removed {}, kept {}", counts.original, counts.removed, counts.corrected);
    }
    println!("manifest: {}", summary.manifest_path.display());
    Ok(0)
}

fn cmd_train(args: &TrainArgs) -> Result<u8, Error> {
    let mut config = match &args.config {
        Some(path) => TrainConfig::from_file(path)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = args.model {
        config.model = v;
    }
    if let Some(v) = args.dim {
        config.dim = v;
    }
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.lr {
        config.learning_rate = v;
    }
    if let Some(v) = args.negatives {
        config.negatives = v;
    }
    if args.loss.is_some() {
        config.loss = args.loss;
    }
    if let Some(v) = args.margin {
        config.margin = v;
    }
    if let Some(v) = args.optimizer {
        config.optimizer = v;
    }
    if args.reciprocal {
        config.reciprocal = true;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }

    let (dataset, _) = load(&args.data)?;
    let outcome = training::train(&dataset, &config)?;
    let checkpoint = Checkpoint::new(outcome.params.clone(), &dataset.vocab, &dataset.train, outcome.reciprocal);
    checkpoint.save(&args.checkpoint)?;
    if let Some(path) = &args.loss_csv {
        write_text(path, &outcome.loss_csv())?;
    }
    if let (Some(first), Some(last)) = (outcome.loss_trace.first(), outcome.loss_trace.last()) {
        println!("epoch {} loss {:.6} -> epoch {} loss {:.6}", first.epoch, first.mean_loss, last.epoch, last.mean_loss);
    }
    println!("checkpoint: {}", args.checkpoint.display());
    Ok(0)
}

fn cmd_eval(args: &EvalArgs) -> Result<u8, Error> {
    let (dataset, _) = load(&args.data)?;
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    let params = checkpoint.params_for(&dataset.vocab)?;
    let settings = EvalSettings {
        policy: args.oov_policy,
        tie: args.tie,
        reciprocal: checkpoint.reciprocal,
        threads: args.threads,
    };
    let evaluator = Evaluator::new(&params, &dataset, settings)?;
    let mut report = match args.direction {
        Direction::Entity => evaluator.link_prediction(args.split)?,
        Direction::Relation => evaluator.relation_prediction(args.split)?,
    };
    report.model = Some(args.model_name.clone().unwrap_or_else(|| params.kind.as_str().to_owned()));

    let json = to_json(&report)?;
    match &args.json {
        Some(path) => {
            write_text(path, &json)?;
            println!("{report}");
        }
        None => print!("{json}"),
    }
    if let Some(path) = &args.md {
        write_text(path, &format!("{}{}", MetricsReport::markdown_header(), report.markdown_row()))?;
    }
    if args.per_relation {
        let mut text = String::from("| Relation | MRR |\n|---|---:|\n");
        for (label, mrr) in &report.per_relation_mrr {
            text.push_str(&format!("| {label} | {} |\n", kgbench::evaluation::fmt3(*mrr)));
        }
        eprint!("{text}");
    }
    Ok(0)
}

fn read_reports(paths: &[PathBuf]) -> Result<Vec<MetricsReport>, Error> {
    let mut reports = Vec::new();
    for path in paths {
        if !path.is_file() {
            return Err(Error::MissingFile(path.clone()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        if value.is_array() {
            reports.extend(serde_json::from_value::<Vec<MetricsReport>>(value)?);
        } else {
            reports.push(serde_json::from_value(value)?);
        }
    }
    Ok(reports)
}

fn print_comparison(title: &str, comparison: &Comparison) {
    println!("## {title}\n");
    print!("{}", comparison.to_markdown());
}

fn cmd_compare(args: &CompareArgs) -> Result<u8, Error> {
    let excluded: Vec<&str> = args.exclude_model.iter().map(String::as_str).collect();
    let (title, comparison) = match &args.fixtures {
        Some(name) => {
            let samples = stats::fixture_samples(&stats::fixture_rows(), name, &excluded)?;
            (name.clone(), Comparison::from_samples(&samples, args.zero_policy)?)
        }
        None if !args.before.is_empty() => {
            let before = read_reports(&args.before)?;
            let after = read_reports(&args.after)?;
            ("reports".to_owned(), stats::compare_reports(&before, &after, args.zero_policy)?)
        }
        None => return Err(Error::InvalidConfig("give --fixtures or --before/--after".into())),
    };
    print_comparison(&title, &comparison);
    if let Some(path) = &args.md {
        write_text(path, &comparison.to_markdown())?;
    }
    if let Some(path) = &args.json {
        write_text(path, &to_json(&comparison)?)?;
    }
    Ok(0)
}

fn cmd_stats(args: &StatsArgs) -> Result<u8, Error> {
    let rows = match &args.csv {
        Some(path) => {
            if !path.is_file() {
                return Err(Error::MissingFile(path.clone()));
            }
            let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
            stats::read_fixture_rows(file)?
        }
        None => stats::fixture_rows(),
    };
    let excluded: Vec<&str> = args.exclude_model.iter().map(String::as_str).collect();
    let datasets = match &args.dataset {
        Some(d) => vec![d.clone()],
        None => stats::fixture_datasets(&rows),
    };
    let mut results = std::collections::BTreeMap::new();
    for dataset in datasets {
        let samples = stats::fixture_samples(&rows, &dataset, &excluded)?;
        let comparison = Comparison::from_samples(&samples, args.zero_policy)?;
        let t = &comparison.test;
        println!(
            "{dataset}: n = {}, W+ = {}, W- = {}, p = {:.3e} ({:?}); mean |delta| = {:.4}",
            t.n_used, t.w_plus, t.w_minus, t.p_value, t.method, comparison.summary.mean_abs_delta
        );
        results.insert(dataset, comparison);
    }
    if let Some(path) = &args.json {
        write_text(path, &to_json(&results)?)?;
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Audit(a) => cmd_audit(a),
        Command::Correct(a) => cmd_correct(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Stats(a) => cmd_stats(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
