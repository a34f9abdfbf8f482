//! The `sqlbpe` command line.
//!
//! Exit codes: 0 success, 1 output failure, 2 unreadable or malformed input
//! (and usage errors), 3 a query that cannot be parsed in ast mode, 4 a token
//! that cannot be decoded with the given table.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bpetrain::{self, AstTrees, Mode, StopReason, TrainerConfig};
use crate::codec::{self, MergeTable};
use crate::corpus::{self, Corpus, Role, SplitMode, SplitResolver};
use crate::error::Error;
use crate::metrics;
use crate::sqlast::{self, AstTree};

#[derive(Parser, Debug)]
#[command(name = "sqlbpe", version, about = "Token-level BPE for SQL query corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split a JSON text-to-SQL dataset into train/valid/test corpora
    Ingest(IngestArgs),
    /// Learn a merge table
    Train(TrainArgs),
    /// Apply a merge table to a corpus
    Encode(CodecArgs),
    /// Expand merged tokens back to base tokens
    Decode(CodecArgs),
    /// Print corpus statistics
    Stats(StatsArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Question,
    Query,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Plain,
    Ast,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long, value_name = "PATH")]
    json: PathBuf,
    #[arg(long, value_enum)]
    split: SplitArg,
    /// Keep entity placeholders instead of substituting their values
    #[arg(long)]
    anonymize: bool,
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Map a numeric fold id to a role, e.g. `--fold 0=test` (repeatable)
    #[arg(long = "fold", value_name = "ID=ROLE", value_parser = parse_fold)]
    folds: Vec<(String, Role)>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_name = "PATH")]
    train: PathBuf,
    #[arg(long, value_name = "PATH")]
    valid: PathBuf,
    #[arg(long, value_enum, default_value = "plain")]
    mode: ModeArg,
    /// Retention steps: rejected candidates tolerated before stopping
    #[arg(short = 'r', default_value_t = bpetrain::DEFAULT_RETENTION_STEPS)]
    retention_steps: usize,
    /// Minimum training-set count for validation tokens
    #[arg(short = 'm', default_value_t = bpetrain::DEFAULT_MIN_COUNT)]
    min_count: usize,
    /// Cap on accepted merges (0 disables the cap)
    #[arg(long, default_value_t = bpetrain::DEFAULT_MAX_STEPS)]
    max_steps: usize,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Write the training report as JSON
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CodecArgs {
    #[arg(long, value_name = "PATH")]
    table: PathBuf,
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long, value_name = "PATH")]
    train: PathBuf,
    #[arg(long, value_name = "PATH")]
    valid: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    test: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    table: Option<PathBuf>,
    /// Minimum count for the OOV report (defaults to the table's m, else 100)
    #[arg(short = 'm')]
    min_count: Option<usize>,
    /// Print the report as a JSON object
    #[arg(long)]
    json: bool,
    /// Print one S-expression parse tree per training query before the report
    #[arg(long)]
    dump_ast: bool,
}

fn parse_fold(s: &str) -> Result<(String, Role), String> {
    let (id, role) = s.split_once('=').ok_or("expected ID=ROLE")?;
    let role = match role {
        "train" => Role::Train,
        "valid" | "dev" => Role::Valid,
        "test" => Role::Test,
        other => return Err(format!("unknown role {other:?}")),
    };
    Ok((id.to_owned(), role))
}

#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn new(code: i32, message: impl std::fmt::Display) -> Self {
        CliError {
            code,
            message: message.to_string(),
        }
    }

    fn input(err: Error) -> Self {
        CliError::new(2, err)
    }

    fn output(err: impl std::fmt::Display) -> Self {
        CliError::new(1, err)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{rendered}");
            } else {
                let _ = write!(stderr, "{rendered}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => ingest(a, stdout),
        Command::Train(a) => train(a, stdout),
        Command::Encode(a) => encode(a),
        Command::Decode(a) => decode(a),
        Command::Stats(a) => stats(a, stdout),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "sqlbpe: {}", e.message);
            e.code
        }
    }
}

fn ingest(args: IngestArgs, stdout: &mut dyn Write) -> CliResult {
    let records = corpus::load_dataset_json(&args.json).map_err(CliError::input)?;
    let resolver = args
        .folds
        .into_iter()
        .fold(SplitResolver::default(), |r, (id, role)| r.with_fold(id, role));
    let mode = match args.split {
        SplitArg::Question => SplitMode::Question,
        SplitArg::Query => SplitMode::Query,
    };
    let (train, valid, test) =
        corpus::build_split(&records, mode, args.anonymize, &resolver).map_err(CliError::input)?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::output(format!("{}: {e}", args.out_dir.display())))?;
    for c in [&train, &valid, &test] {
        let path = args.out_dir.join(format!("{}.txt", c.role));
        c.save_plaintext(&path).map_err(CliError::output)?;
    }
    writeln!(
        stdout,
        "train={} valid={} test={}",
        train.len(),
        valid.len(),
        test.len()
    )
    .map_err(CliError::output)
}

fn parse_all(corpus: &Corpus, name: &str) -> CliResult<Vec<AstTree>> {
    corpus
        .queries
        .iter()
        .enumerate()
        .map(|(i, q)| {
            sqlast::parse(&q.tokens)
                .map_err(|e| CliError::new(3, format!("{name} query {i}: {e}")))
        })
        .collect()
}

#[derive(Serialize)]
struct TrainReportFile<'a> {
    mode: Mode,
    r: usize,
    m: usize,
    max_steps: Option<usize>,
    accepted: &'a [bpetrain::MergeRule],
    rejected: &'a [bpetrain::RejectedPair],
    stop_reason: StopReason,
}

fn train(args: TrainArgs, stdout: &mut dyn Write) -> CliResult {
    let train = corpus::load_plaintext(&args.train, Role::Train).map_err(CliError::input)?;
    let valid = corpus::load_plaintext(&args.valid, Role::Valid).map_err(CliError::input)?;
    let mode = match args.mode {
        ModeArg::Plain => Mode::Plain,
        ModeArg::Ast => Mode::Ast,
    };
    let config = TrainerConfig {
        retention_steps: args.retention_steps,
        min_count: args.min_count,
        mode,
        max_steps: (args.max_steps > 0).then_some(args.max_steps),
    };
    let trees = match mode {
        Mode::Plain => None,
        Mode::Ast => Some((parse_all(&train, "train")?, parse_all(&valid, "valid")?)),
    };
    let output = bpetrain::train(
        &train,
        &valid,
        &config,
        trees.as_ref().map(|(t, v)| AstTrees { train: t, valid: v }),
    )
    .map_err(CliError::input)?;

    codec::save_table(&output.table, &args.out).map_err(CliError::output)?;
    if let Some(path) = &args.report {
        let report = TrainReportFile {
            mode,
            r: config.retention_steps,
            m: config.min_count,
            max_steps: config.max_steps,
            accepted: &output.report.accepted,
            rejected: &output.report.rejected,
            stop_reason: output.report.stop_reason,
        };
        let mut text = serde_json::to_string_pretty(&report).map_err(CliError::output)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::output(format!("{}: {e}", path.display())))?;
    }
    writeln!(
        stdout,
        "accepted={} rejected={} stop_reason={}",
        output.report.accepted.len(),
        output.report.rejected.len(),
        serde_json::to_value(output.report.stop_reason)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default()
    )
    .map_err(CliError::output)
}

fn load_table(path: &Path) -> CliResult<MergeTable> {
    codec::load_table(path).map_err(CliError::input)
}

fn encode(args: CodecArgs) -> CliResult {
    let table = load_table(&args.table)?;
    let input = corpus::load_plaintext(&args.input, Role::Test).map_err(CliError::input)?;
    codec::encode(&input, &table)
        .save_plaintext(&args.out)
        .map_err(CliError::output)
}

fn decode(args: CodecArgs) -> CliResult {
    let table = load_table(&args.table)?;
    let input = corpus::load_plaintext(&args.input, Role::Test).map_err(CliError::input)?;
    let decoded = codec::decode(&input, &table).map_err(|e| CliError::new(4, e))?;
    decoded.save_plaintext(&args.out).map_err(CliError::output)
}

/// Ordered key/value pairs shared by the text and JSON renderings.
fn stats_fields(args: &StatsArgs) -> CliResult<Vec<(&'static str, Value)>> {
    let train = corpus::load_plaintext(&args.train, Role::Train).map_err(CliError::input)?;
    let table = args.table.as_deref().map(load_table).transpose()?;

    let mut fields = vec![
        ("train_queries", json!(train.len())),
        ("train_tokens", json!(train.total_tokens())),
        ("vocab_size", json!(corpus::vocabulary(&train, 1).len())),
    ];
    if let Some(path) = &args.valid {
        let valid = corpus::load_plaintext(path, Role::Valid).map_err(CliError::input)?;
        let m = args
            .min_count
            .or(table.as_ref().map(|t| t.meta().min_count))
            .unwrap_or(bpetrain::DEFAULT_MIN_COUNT);
        let report = metrics::oov_report(&train, &valid, m);
        fields.push(("valid_queries", json!(valid.len())));
        fields.push(("oov_min_count", json!(m)));
        fields.push(("oov_count", json!(report.count)));
        fields.push(("oov_tokens", json!(report.oov_tokens)));
    }
    if let Some(table) = &table {
        let encoded = codec::encode(&train, table);
        let lengths = metrics::length_stats(&train, &encoded).map_err(CliError::input)?;
        fields.push(("merge_rules", json!(table.len())));
        fields.push(("mean_length_before", json!(lengths.mean_before)));
        fields.push(("mean_length_after", json!(lengths.mean_after)));
        fields.push(("reduction_fraction", json!(lengths.reduction_fraction)));
    }
    if let Some(path) = &args.test {
        let test = corpus::load_plaintext(path, Role::Test).map_err(CliError::input)?;
        fields.push(("test_queries", json!(test.len())));
        fields.push(("unseen_pattern_rate", json!(metrics::unseen_pattern_rate(&train, &test))));
    }
    Ok(fields)
}

fn render_text(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(render_text).collect::<Vec<_>>().join(" "),
        other => other.to_string(),
    }
}

fn stats(args: StatsArgs, stdout: &mut dyn Write) -> CliResult {
    let fields = stats_fields(&args)?;
    if args.dump_ast {
        let train = corpus::load_plaintext(&args.train, Role::Train).map_err(CliError::input)?;
        for q in &train.queries {
            let line = match sqlast::parse(&q.tokens) {
                Ok(tree) => tree.to_sexpr(&q.tokens),
                Err(e) => format!("(error {e})"),
            };
            writeln!(stdout, "{line}").map_err(CliError::output)?;
        }
    }
    if args.json {
        let obj: serde_json::Map<String, Value> =
            fields.into_iter().map(|(k, v)| (k.to_owned(), v)).collect();
        writeln!(stdout, "{}", Value::Object(obj)).map_err(CliError::output)
    } else {
        for (k, v) in &fields {
            writeln!(stdout, "{k}={}", render_text(v)).map_err(CliError::output)?;
        }
        Ok(())
    }
}
