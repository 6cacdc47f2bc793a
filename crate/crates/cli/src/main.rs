//! Command-line driver for the mode-gated reasoning toolkit: transcript
//! parsing, answer verification, corpus synthesis, training simulation, layer
//! saturation planning, and distillation-loss checks.
//!
//! Primary results (JSON or CSV) go to stdout; diagnostics go to stderr. Exit
//! codes distinguish whose fault a failure was: 2 for problems in the
//! command line or input files, 1 for infrastructure faults (sandbox,
//! backends, output writes), 0 otherwise — including a *failed verification
//! verdict*, which is a result, not an error.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use autothink_core::coldstart::backend::{
    GeneratorBackend, RemoteBackend, ReplayBackend, SyntheticBackend,
};
use autothink_core::coldstart::{build_corpus, write_corpus_jsonl, CorpusError, QueryRecord};
use autothink_core::config::{load_config, BackendSelection, GlobalConfig};
use autothink_core::distill::{mtp_distill_loss, uld_loss, LogitMatrix, MtpConfig, UldResult};
use autothink_core::format::{parse_response, render_response};
use autothink_core::matrix_io::read_matrix_csv;
use autothink_core::sim::{default_mixed_corpus, run_training, write_metrics_csv};
use autothink_core::upscale::{
    build_saturation_report, build_upscale_plan, load_layer_activations, select_saturated,
    SelectionMode,
};
use autothink_core::verify::expr::EquivConfig;
use autothink_core::verify::sandbox::ProcessSandbox;
use autothink_core::verify::{verify, ReferenceSpec, VerifyError};
use autothink_core::Domain;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "autothink",
    version,
    about = "Tools for mode-gated reasoning pipelines",
    propagate_version = true
)]
struct Cli {
    /// JSON configuration file; built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a transcript and print its structure as JSON.
    Parse(ParseArgs),
    /// Verify an answer against a reference specification.
    Verify(VerifyArgs),
    /// Synthesize a mode-labeled training corpus from a query pool.
    Synth(SynthArgs),
    /// Run the seeded training simulator and emit per-update metrics.
    Simulate(SimulateArgs),
    /// Score per-layer saturation and plan depth duplication.
    Saturation(SaturationArgs),
    /// Evaluate sorted-distribution distillation losses over logit matrices.
    UldCheck(UldCheckArgs),
}

#[derive(Args)]
struct ParseArgs {
    /// Transcript file; reads stdin when omitted or "-".
    #[arg(value_name = "FILE")]
    input: Option<PathBuf>,
    /// Tolerate missing closing tags (bodies recovered by tag position).
    #[arg(long)]
    lenient: bool,
    /// Print the canonical rendering instead of JSON.
    #[arg(long)]
    canonical: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Task domain of the answer: code, math, science, or general.
    #[arg(long)]
    domain: Domain,
    /// JSON file holding the reference specification.
    #[arg(long, value_name = "FILE")]
    reference: PathBuf,
    /// Answer text file; reads stdin when omitted or "-".
    #[arg(long, value_name = "FILE")]
    answer: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// JSONL file of query records to sample from.
    #[arg(long, value_name = "FILE")]
    pool: PathBuf,
    /// Number of examples to synthesize.
    #[arg(long)]
    n: usize,
    /// Corpus JSONL destination; "-" writes to stdout.
    #[arg(long, value_name = "FILE", default_value = "-")]
    out: PathBuf,
    /// Root seed for sampling, voting, and overrides.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSONL corpus of query records; a built-in 400-query mix when omitted.
    #[arg(long, value_name = "FILE")]
    corpus: Option<PathBuf>,
    /// Metrics CSV destination; "-" writes to stdout.
    #[arg(long, value_name = "FILE", default_value = "-")]
    metrics: PathBuf,
    /// Override the configured number of updates.
    #[arg(long)]
    updates: Option<usize>,
    /// Override the configured training seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SaturationArgs {
    /// JSON manifest listing per-layer input/output activation CSV files.
    #[arg(long, value_name = "FILE")]
    activations: PathBuf,
    /// Duplicate the top fraction of layers by saturation score, in (0, 1].
    #[arg(long, conflicts_with = "threshold")]
    fraction: Option<f64>,
    /// Duplicate every layer whose score is at least this value.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct UldCheckArgs {
    /// Teacher logits CSV (rows are positions, columns vocabulary entries).
    #[arg(long, value_name = "FILE")]
    teacher: PathBuf,
    /// Student logits CSV.
    #[arg(long, value_name = "FILE")]
    student: PathBuf,
    /// Prediction-head logits CSV; repeat per head, head k targets k steps ahead.
    #[arg(long = "head", value_name = "FILE")]
    heads: Vec<PathBuf>,
    /// Weight of the averaged head losses in the total.
    #[arg(long, default_value_t = 0.3)]
    mtp_weight: f64,
    /// Cross-check the analytic gradient against central finite differences.
    #[arg(long)]
    fd: bool,
}

/// Failures split by whose fault they are: bad input exits 2, a broken
/// environment exits 1.
enum CliError {
    Invalid(String),
    Infrastructure(String),
}

type CliResult<T> = Result<T, CliError>;

fn invalid(message: impl Into<String>) -> CliError {
    CliError::Invalid(message.into())
}

fn infra(message: impl Into<String>) -> CliError {
    CliError::Infrastructure(message.into())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Infrastructure(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Invalid(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let config = match &cli.config {
        Some(path) => load_config(path).map_err(|e| invalid(e.to_string()))?,
        None => GlobalConfig::default(),
    };
    match cli.command {
        Command::Parse(args) => cmd_parse(args),
        Command::Verify(args) => cmd_verify(&config, args),
        Command::Synth(args) => cmd_synth(&config, args),
        Command::Simulate(args) => cmd_simulate(&config, args),
        Command::Saturation(args) => cmd_saturation(args),
        Command::UldCheck(args) => cmd_uld_check(args),
    }
}

/// Reads a file, or stdin for `None` / `-`.
fn read_text(path: Option<&Path>) -> CliResult<String> {
    match path {
        Some(p) if p.as_os_str() != "-" => fs::read_to_string(p)
            .map_err(|e| invalid(format!("cannot read {}: {e}", p.display()))),
        _ => {
            let mut text = String::new();
            io::stdin()
                .read_to_string(&mut text)
                .map_err(|e| infra(format!("cannot read stdin: {e}")))?;
            Ok(text)
        }
    }
}

/// Streams primary output to a file, or stdout for `-`.
fn write_output<F>(path: &Path, write: F) -> io::Result<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    if path.as_os_str() == "-" {
        let stdout = io::stdout();
        let mut lock = stdout.lock();
        write(&mut lock)?;
        lock.flush()
    } else {
        let file = fs::File::create(path)?;
        let mut writer = io::BufWriter::new(file);
        write(&mut writer)?;
        writer.flush()
    }
}

fn load_query_records(path: &Path) -> CliResult<Vec<QueryRecord>> {
    let text = fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: QueryRecord = serde_json::from_str(line)
            .map_err(|e| invalid(format!("{} line {}: {e}", path.display(), index + 1)))?;
        records.push(record);
    }
    Ok(records)
}

fn cmd_parse(args: ParseArgs) -> CliResult<()> {
    let text = read_text(args.input.as_deref())?;
    let response = parse_response(&text, !args.lenient)
        .map_err(|e| invalid(format!("transcript does not parse: {e}")))?;
    if args.canonical {
        println!("{}", render_response(&response));
    } else {
        println!("{}", serde_json::to_string(&response).expect("response serializes"));
    }
    Ok(())
}

fn cmd_verify(config: &GlobalConfig, args: VerifyArgs) -> CliResult<()> {
    let reference_text = fs::read_to_string(&args.reference)
        .map_err(|e| invalid(format!("cannot read {}: {e}", args.reference.display())))?;
    let reference: ReferenceSpec = serde_json::from_str(&reference_text)
        .map_err(|e| invalid(format!("{}: {e}", args.reference.display())))?;
    let answer = read_text(args.answer.as_deref())?;
    let outcome = verify(
        args.domain,
        &answer,
        &reference,
        &ProcessSandbox,
        &EquivConfig::default(),
        &config.sandbox,
    )
    .map_err(|e| match e {
        VerifyError::SandboxUnavailable(inner) => infra(format!("sandbox: {inner}")),
        other => invalid(other.to_string()),
    })?;
    println!("{}", serde_json::to_string(&outcome).expect("outcome serializes"));
    Ok(())
}

fn make_backend(selection: &BackendSelection, seed: u64) -> CliResult<Box<dyn GeneratorBackend>> {
    match selection {
        BackendSelection::Synthetic => Ok(Box::new(SyntheticBackend::new(seed))),
        BackendSelection::Replay(path) => ReplayBackend::from_path(path)
            .map(|b| Box::new(b) as Box<dyn GeneratorBackend>)
            .map_err(|e| invalid(format!("replay transcripts: {e}"))),
        BackendSelection::Remote(endpoint) => Ok(Box::new(RemoteBackend::new(endpoint.clone()))),
    }
}

fn cmd_synth(config: &GlobalConfig, args: SynthArgs) -> CliResult<()> {
    let pool = load_query_records(&args.pool)?;
    let backend = make_backend(&config.backend, args.seed)?;
    let (examples, stats) = build_corpus(&pool, args.n, &config.mix, backend.as_ref(), args.seed)
        .map_err(|e| match e {
            CorpusError::BackendFailure { .. } => infra(e.to_string()),
            other => invalid(other.to_string()),
        })?;
    write_output(&args.out, |mut w| write_corpus_jsonl(&mut w, &examples))
        .map_err(|e| infra(format!("cannot write {}: {e}", args.out.display())))?;
    let stats_json = serde_json::to_string(&stats).expect("stats serialize");
    if args.out.as_os_str() == "-" {
        // The corpus owns stdout; keep the summary out of its way.
        eprintln!("{stats_json}");
    } else {
        println!("{stats_json}");
    }
    Ok(())
}

fn cmd_simulate(config: &GlobalConfig, args: SimulateArgs) -> CliResult<()> {
    let corpus = match &args.corpus {
        Some(path) => load_query_records(path)?,
        None => default_mixed_corpus(400),
    };
    let mut train = config.train;
    if let Some(updates) = args.updates {
        train.updates = updates;
    }
    if let Some(seed) = args.seed {
        train.seed = seed;
    }
    let run = run_training(&corpus, &config.env, &config.reward, &train)
        .map_err(|e| invalid(e.to_string()))?;
    write_output(&args.metrics, |mut w| write_metrics_csv(&mut w, &run.metrics))
        .map_err(|e| infra(format!("cannot write {}: {e}", args.metrics.display())))?;
    if args.metrics.as_os_str() != "-" {
        let first = run.metrics.first().expect("a training run always evaluates at least once");
        let last = run.metrics.last().expect("a training run always evaluates at least once");
        let summary = serde_json::json!({
            "updates": train.updates,
            "initial": first,
            "final": last,
            "final_weights": run.final_policy.weights,
        });
        println!("{summary}");
    }
    Ok(())
}

fn cmd_saturation(args: SaturationArgs) -> CliResult<()> {
    let mode = match (args.fraction, args.threshold) {
        (Some(f), None) => SelectionMode::Fraction(f),
        (None, Some(t)) => SelectionMode::Threshold(t),
        (None, None) => return Err(invalid("pass one of --fraction or --threshold")),
        (Some(_), Some(_)) => unreachable!("clap rejects conflicting flags"),
    };
    let activations =
        load_layer_activations(&args.activations).map_err(|e| invalid(e.to_string()))?;
    let report = build_saturation_report(&activations).map_err(|e| invalid(e.to_string()))?;
    let selected = select_saturated(&report.scores, mode).map_err(|e| invalid(e.to_string()))?;
    let plan =
        build_upscale_plan(report.scores.len(), &selected).map_err(|e| invalid(e.to_string()))?;
    let output = serde_json::json!({
        "scores": report.scores,
        "excluded_token_counts": report.excluded_token_counts,
        "selected": selected,
        "plan": plan,
    });
    println!("{output}");
    Ok(())
}

fn load_logits(path: &Path) -> CliResult<LogitMatrix<f64>> {
    let matrix = read_matrix_csv::<f64>(path)
        .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    LogitMatrix::new(matrix).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn cmd_uld_check(args: UldCheckArgs) -> CliResult<()> {
    let teacher = load_logits(&args.teacher)?;
    let student = load_logits(&args.student)?;
    let main_result = uld_loss(&teacher, &student).map_err(|e| invalid(e.to_string()))?;

    let mut output = serde_json::json!({
        "main_loss": main_result.loss,
        "per_position": main_result.per_position,
        "total_loss": main_result.loss,
    });
    if !args.heads.is_empty() {
        let heads: Vec<LogitMatrix<f64>> =
            args.heads.iter().map(|p| load_logits(p)).collect::<CliResult<_>>()?;
        let cfg = MtpConfig { num_heads: heads.len(), mtp_weight: args.mtp_weight };
        cfg.validate().map_err(invalid)?;
        let mtp = mtp_distill_loss(&teacher, &student, &heads, &cfg)
            .map_err(|e| invalid(e.to_string()))?;
        output["head_losses"] = serde_json::json!(mtp.head_losses);
        output["total_loss"] = serde_json::json!(mtp.total);
    }
    if args.fd {
        output["fd_max_rel_err"] = serde_json::json!(fd_check(&teacher, &student, &main_result)?);
    }
    println!("{output}");
    Ok(())
}

/// Worst relative disagreement between the analytic student gradient and
/// central finite differences, with a floor that absorbs cancellation noise
/// at exactly-zero gradients.
fn fd_check(
    teacher: &LogitMatrix<f64>,
    student: &LogitMatrix<f64>,
    result: &UldResult<f64>,
) -> CliResult<f64> {
    let h = 1e-5;
    let rows: Vec<Vec<f64>> = (0..student.rows()).map(|r| student.row(r).to_vec()).collect();
    let loss_at = |rows: Vec<Vec<f64>>| -> CliResult<f64> {
        let matrix = LogitMatrix::from_rows(rows).map_err(|e| invalid(e.to_string()))?;
        Ok(uld_loss(teacher, &matrix).map_err(|e| invalid(e.to_string()))?.loss)
    };
    let mut worst: f64 = 0.0;
    for pos in 0..student.rows() {
        for k in 0..student.vocab() {
            let mut plus = rows.clone();
            plus[pos][k] += h;
            let mut minus = rows.clone();
            minus[pos][k] -= h;
            let fd = (loss_at(plus)? - loss_at(minus)?) / (2.0 * h);
            let analytic = result.grad_student[[pos, k]];
            let scale = fd.abs().max(analytic.abs()).max(1e-6);
            worst = worst.max((fd - analytic).abs() / scale);
        }
    }
    Ok(worst)
}
