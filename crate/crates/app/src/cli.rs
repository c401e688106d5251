use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use aop_smart_core::bench::{
    self, generate_questions, load_benchmark, questions_to_json, render_report, BenchOptions,
    BenchmarkReport,
};
use aop_smart_core::kb::{self, load_resources, write_resources, DEFAULT_MAX_DESC_CHARS};
use aop_smart_core::llm::{ApiKey, LlmClient, LlmConfig, API_KEY_ENV, DEFAULT_MAX_OUTPUT_TOKENS};
use aop_smart_core::pipeline::{self, Mode, PipelineError, QueryRequest, DEFAULT_TOP_N};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::server::{self, ServiceConfig, DEFAULT_BODY_LIMIT};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    /// Unexpected I/O failure writing output.
    pub const FAILURE: u8 = 1;
    /// Bad command line.
    pub const USAGE: u8 = 2;
    /// Unreadable or malformed XML dump.
    pub const INGEST: u8 = 3;
    /// Knowledge directory missing, inconsistent or unwritable.
    pub const RESOURCES: u8 = 4;
    /// Invalid endpoint, model, key or generation setting.
    pub const CONFIG: u8 = 5;
    /// Backend call failed.
    pub const BACKEND: u8 = 6;
    /// Question file invalid.
    pub const QUESTIONS: u8 = 7;
    /// Service could not start.
    pub const SERVICE: u8 = 8;
}

const EXIT_HELP: &str = "\
Exit codes:
  0  success
  1  unexpected I/O failure
  2  invalid command line
  3  XML dump unreadable or malformed
  4  knowledge directory missing, inconsistent or unwritable
  5  invalid endpoint, model, key or generation setting
  6  model backend call failed
  7  benchmark question file invalid
  8  service failed to start

The API key may be passed with --api-key or through AOP_SMART_API_KEY; the
environment variable wins when both are set.";

#[derive(Debug, Parser)]
#[command(
    name = "aop-smart",
    version,
    about = "Retrieval-augmented question answering over AOP-Wiki knowledge",
    after_help = EXIT_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert an AOP-Wiki XML dump into Index.txt and AOP-Smart.json.
    Ingest(IngestArgs),
    /// Answer one question.
    Query(QueryArgs),
    /// Run the benchmark and write a report.
    Bench(BenchArgs),
    /// List models offered by the backend.
    Models(BackendArgs),
    /// Serve the HTTP API and the browser UI.
    Serve(ServeArgs),
    /// Derive a benchmark question file from a knowledge directory.
    GenQuestions(GenArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    xml: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_DESC_CHARS)]
    max_desc_chars: usize,
    /// Defaults to a YYYY-MM-DD date in the file name, else "unknown".
    #[arg(long)]
    snapshot_date: Option<String>,
}

#[derive(Debug, Args)]
struct BackendArgs {
    /// OpenAI-compatible base URL, e.g. https://api.example.com/v1
    #[arg(long)]
    endpoint: String,
    #[arg(long)]
    api_key: Option<String>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_OUTPUT_TOKENS)]
    max_output_tokens: u32,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum QueryMode {
    Rag,
    Baseline,
}

impl From<QueryMode> for Mode {
    fn from(m: QueryMode) -> Self {
        match m {
            QueryMode::Rag => Mode::Rag,
            QueryMode::Baseline => Mode::Baseline,
        }
    }
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long)]
    question: String,
    #[arg(long, value_enum, default_value = "rag")]
    mode: QueryMode,
    #[arg(long, default_value_t = DEFAULT_TOP_N)]
    top_n: usize,
    /// Print seeds, expanded ids and the rendered context after the answer.
    #[arg(long)]
    explain: bool,
    /// Directory with Index.txt and AOP-Smart.json. Required for RAG mode.
    #[arg(long)]
    kb: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BenchMode {
    Rag,
    Baseline,
    Both,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    questions: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    mode: BenchMode,
    #[arg(long, default_value_t = DEFAULT_TOP_N)]
    top_n: usize,
    /// JSON report path. The markdown table goes next to it with an .md extension.
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    kb: PathBuf,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long)]
    kb: PathBuf,
    /// Directory of built web assets.
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
    /// Question file for benchmark jobs. Generated from the KB when omitted.
    #[arg(long)]
    questions: Option<PathBuf>,
    /// Endpoint used when a request does not name one.
    #[arg(long)]
    endpoint: Option<String>,
    /// Model used when a request does not name one.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = DEFAULT_BODY_LIMIT)]
    max_body_bytes: usize,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    per_category: usize,
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl std::fmt::Display) -> Failure {
    Failure {
        code,
        message: message.to_string(),
    }
}

fn snapshot_date_from_name(path: &Path) -> Option<String> {
    let name = path.file_name()?.to_str()?;
    let bytes = name.as_bytes();
    (0..bytes.len().saturating_sub(9)).find_map(|i| {
        let s = name.get(i..i + 10)?;
        let b = s.as_bytes();
        let ok = b.iter().enumerate().all(|(j, c)| match j {
            4 | 7 => *c == b'-',
            _ => c.is_ascii_digit(),
        });
        ok.then(|| s.to_string())
    })
}

fn backend_config(args: &BackendArgs, model: &str) -> Result<LlmConfig, Failure> {
    let key = ApiKey::new(args.api_key.clone().unwrap_or_default());
    let config = LlmConfig::new(&args.endpoint, key, model)
        .map_err(|e| fail(exit::CONFIG, e))?
        .with_env_override();
    if config.api_key().is_empty() {
        tracing::warn!("no API key given; set --api-key or {API_KEY_ENV}");
    }
    Ok(config)
}

fn model_config(args: &ModelArgs) -> Result<LlmConfig, Failure> {
    if args.model.trim().is_empty() {
        return Err(fail(exit::CONFIG, "--model must not be empty"));
    }
    backend_config(&args.backend, &args.model)?
        .with_temperature(args.temperature)
        .and_then(|c| c.with_max_output_tokens(args.max_output_tokens))
        .map_err(|e| fail(exit::CONFIG, e))
}

fn pipeline_failure(e: PipelineError) -> Failure {
    match e {
        PipelineError::InvalidRequest(_) => fail(exit::USAGE, e),
        PipelineError::Configuration(_) => fail(exit::CONFIG, e),
        PipelineError::Gateway { .. } => fail(exit::BACKEND, e),
        PipelineError::Expansion(_) => fail(exit::RESOURCES, e),
    }
}

fn ingest(args: IngestArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let xml = std::fs::read(&args.xml).map_err(|e| {
        fail(
            exit::INGEST,
            format!("cannot read {}: {e}", args.xml.display()),
        )
    })?;
    let date = args
        .snapshot_date
        .or_else(|| snapshot_date_from_name(&args.xml))
        .unwrap_or_else(|| "unknown".to_string());
    let (kb, index, diag) = aop_smart_core::ingest_xml(&xml, args.max_desc_chars, &date)
        .map_err(|e| fail(exit::INGEST, format!("{}: {e}", args.xml.display())))?;
    let (index_path, kb_path) =
        write_resources(&kb, &index, &args.out_dir).map_err(|e| fail(exit::RESOURCES, e))?;
    let _ = writeln!(
        out,
        "ingested {} KEs, {} KERs, {} AOPs (dropped {} KEs, {} KERs, {} AOPs, {} AOP event references)",
        kb.ke_count(),
        kb.ker_count(),
        kb.aop_count(),
        diag.dropped_key_events,
        diag.dropped_relationships,
        diag.dropped_aops,
        diag.dropped_aop_event_refs,
    );
    let _ = writeln!(
        out,
        "index: {} (~{} tokens)",
        index_path.display(),
        kb::estimate_tokens(&index.to_text())
    );
    let _ = writeln!(out, "knowledge: {}", kb_path.display());
    Ok(())
}

async fn query(args: QueryArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let config = model_config(&args.model)?;
    let mode = Mode::from(args.mode);
    let request = QueryRequest::new(args.question, args.top_n, mode).map_err(pipeline_failure)?;
    let resources = match (&args.kb, mode) {
        (Some(dir), _) => Some(load_resources(dir).map_err(|e| fail(exit::RESOURCES, e))?),
        (None, Mode::Rag) => {
            return Err(fail(
                exit::CONFIG,
                "rag mode needs a knowledge directory (--kb)",
            ))
        }
        (None, Mode::Baseline) => None,
    };
    let client = LlmClient::new();
    let answer = pipeline::answer(
        &client,
        &config,
        resources.as_ref().map(|(kb, index)| (kb, index)),
        &request,
    )
    .await
    .map_err(pipeline_failure)?;

    let _ = writeln!(out, "{}", answer.text);
    if args.explain {
        let _ = writeln!(out, "\n--- explain ---");
        let _ = writeln!(out, "mode: {}", answer.mode);
        for flag in &answer.flags {
            let _ = writeln!(out, "flag: {flag:?}");
        }
        if let Some(p) = &answer.provenance {
            let join = |v: Vec<String>| {
                if v.is_empty() {
                    "(none)".into()
                } else {
                    v.join(", ")
                }
            };
            let _ = writeln!(
                out,
                "seeds: {}",
                join(p.seed_ids.iter().map(|i| i.to_string()).collect())
            );
            let s = &p.selection;
            let _ = writeln!(
                out,
                "expanded: {}",
                join(s.expanded_ke_ids.iter().map(|i| i.to_string()).collect())
            );
            let _ = writeln!(
                out,
                "relationships: {}",
                join(s.ker_ids.iter().map(|i| i.to_string()).collect())
            );
            let _ = writeln!(
                out,
                "pathways: {}",
                join(s.aop_ids.iter().map(|i| i.to_string()).collect())
            );
            let _ = writeln!(out, "\n{}", p.context.rendered_text);
        }
    }
    Ok(())
}

async fn run_bench(args: BenchArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let config = model_config(&args.model)?;
    if args.top_n == 0 {
        return Err(fail(exit::USAGE, "--top-n must be at least 1"));
    }
    let (kb, index) = load_resources(&args.kb).map_err(|e| fail(exit::RESOURCES, e))?;
    let questions = load_benchmark(&args.questions, &kb).map_err(|e| fail(exit::QUESTIONS, e))?;
    let options = BenchOptions {
        top_n: args.top_n,
        temperature: config.temperature(),
        concurrency: args.concurrency,
    };
    let modes = match args.mode {
        BenchMode::Baseline => vec![Mode::Baseline],
        BenchMode::Rag => vec![Mode::Rag],
        BenchMode::Both => vec![Mode::Baseline, Mode::Rag],
    };
    let client = LlmClient::new();
    let mut report: Option<BenchmarkReport> = None;
    for mode in modes {
        let r = bench::run_benchmark(&client, &config, &kb, &index, &questions, mode, options)
            .await
            .map_err(|e| fail(exit::QUESTIONS, e))?;
        report = Some(match report.take() {
            Some(prev) => prev.merge(r),
            None => r,
        });
    }
    let report = report.expect("at least one mode runs");
    let table = render_report(&report).map_err(|e| fail(exit::QUESTIONS, e))?;
    let failed = report
        .per_question
        .iter()
        .filter(|o| o.error.is_some())
        .count();

    std::fs::write(&args.report, report.to_json()).map_err(|e| {
        fail(
            exit::FAILURE,
            format!("cannot write {}: {e}", args.report.display()),
        )
    })?;
    let md_path = args.report.with_extension("md");
    std::fs::write(&md_path, &table).map_err(|e| {
        fail(
            exit::FAILURE,
            format!("cannot write {}: {e}", md_path.display()),
        )
    })?;

    let _ = write!(out, "{table}");
    if failed > 0 {
        let _ = writeln!(
            out,
            "\n{failed} question(s) failed at the backend; see the report"
        );
    }
    let _ = writeln!(
        out,
        "\nreport: {}\ntable: {}",
        args.report.display(),
        md_path.display()
    );
    Ok(())
}

async fn models(args: BackendArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let config = backend_config(&args, "")?;
    let list = LlmClient::new()
        .fetch_models(&config)
        .await
        .map_err(|e| fail(exit::BACKEND, e))?;
    for m in list {
        let _ = writeln!(out, "{m}");
    }
    Ok(())
}

async fn serve(args: ServeArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let config = ServiceConfig {
        listen: SocketAddr::new(args.host, args.port),
        kb_dir: args.kb,
        static_dir: args.static_dir,
        questions: args.questions,
        default_endpoint: args.endpoint,
        default_model: args.model,
        max_body_bytes: args.max_body_bytes,
    };
    let running = server::serve(config).await.map_err(|e| match e {
        server::ServeError::Resources(_) => fail(exit::RESOURCES, e),
        server::ServeError::Questions(_) => fail(exit::QUESTIONS, e),
        server::ServeError::Bind { .. } => fail(exit::SERVICE, e),
    })?;
    let _ = writeln!(out, "listening on {}", running.base_url());
    let _ = out.flush();
    running.wait().await.map_err(|e| fail(exit::SERVICE, e))
}

fn gen_questions(args: GenArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let (kb, _) = load_resources(&args.kb).map_err(|e| fail(exit::RESOURCES, e))?;
    let questions = generate_questions(&kb, args.per_category);
    std::fs::write(&args.out, questions_to_json(&questions)).map_err(|e| {
        fail(
            exit::FAILURE,
            format!("cannot write {}: {e}", args.out.display()),
        )
    })?;
    let _ = writeln!(
        out,
        "wrote {} questions to {}",
        questions.len(),
        args.out.display()
    );
    Ok(())
}

/// Parses `args` (including the program name) and runs the command. Normal
/// output goes to `out`, diagnostics to `err`. Returns the exit code.
pub async fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
            } else {
                let _ = write!(out, "{rendered}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => ingest(a, out),
        Command::Query(a) => query(a, out).await,
        Command::Bench(a) => run_bench(a, out).await,
        Command::Models(a) => models(a, out).await,
        Command::Serve(a) => serve(a, out).await,
        Command::GenQuestions(a) => gen_questions(a, out),
    };
    match result {
        Ok(()) => exit::OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}
