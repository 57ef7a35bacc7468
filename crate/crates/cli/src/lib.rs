//! Command-line front end. [`run`] is the whole program minus process setup,
//! so tests can drive it with in-memory output streams.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gsnkit::codec::{self, Document};
use gsnkit::corpus::Corpus;
use gsnkit::detection::{evaluate_corpus, format_score, DetectionError, EvaluationBackend, DETERMINISTIC};
use gsnkit::instantiation::{
    generate_case, substitute, Bounded, ChatCompletionBackend, DomainKnowledge, GenerationBackend,
    GenerationBackendConfig, InstantiationError,
};
use gsnkit::model::{statistics, validate, PatternDocument, Severity, Violation};
use gsnkit::persistence::{PersistenceError, ProjectStore, Revision, STORE_ENV};
use gsnkit::{DetectionJob, DetectionRule};
use gsnkit_service::{Service, ServiceConfig, SUBSTITUTE};
use log::{info, LevelFilter};
use serde::Deserialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

/// A failure that ends the program, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Backend(String),
    #[error("{0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Domain(_) | CliError::Io(_) => EXIT_DOMAIN,
            CliError::Backend(_) => EXIT_BACKEND,
        }
    }
}

impl From<DetectionError> for CliError {
    fn from(e: DetectionError) -> Self {
        match e {
            DetectionError::ThresholdOutOfRange(_) | DetectionError::Rule(_) | DetectionError::ZeroRuns => {
                CliError::Usage(e.to_string())
            }
            DetectionError::BackendUnavailable(_) => CliError::Backend(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<InstantiationError> for CliError {
    fn from(e: InstantiationError) -> Self {
        match e {
            InstantiationError::MissingInput(_) => CliError::Usage(e.to_string()),
            InstantiationError::InvalidPattern(_) => CliError::Domain(e.to_string()),
            InstantiationError::ReplyUnparseable { ref raw_reply, ref diagnostics } => {
                let mut msg = e.to_string();
                for d in diagnostics {
                    msg.push_str(&format!("\n  {d}"));
                }
                msg.push_str("\nraw reply:\n");
                msg.push_str(raw_reply);
                CliError::Backend(msg)
            }
            InstantiationError::BackendUnavailable(_) | InstantiationError::BackendRefusal(_) => {
                CliError::Backend(e.to_string())
            }
        }
    }
}

impl From<PersistenceError> for CliError {
    fn from(e: PersistenceError) -> Self {
        CliError::Domain(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "gsnkit", version, about = "GSN assurance cases: convert, validate, detect patterns, instantiate, evaluate")]
pub struct Cli {
    /// Log verbosity: -v info, -vv debug (includes backend request bodies).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert between structured prose, JSON, DOT and SVG.
    Convert(ConvertArgs),
    /// Check GSN well-formedness; exits 1 when any error is found.
    Validate(InputArgs),
    /// Print element, relationship and placeholder counts as JSON.
    Stats(InputArgs),
    /// Apply the similarity rule to a case and one or more patterns.
    Detect(DetectArgs),
    /// Instantiate a pattern with domain knowledge.
    Instantiate(InstantiateArgs),
    /// Threshold sweep over a corpus of cases with known patterns.
    Evaluate(EvaluateArgs),
    /// Run the HTTP JSON service.
    Serve(ServeArgs),
    /// Inspect and maintain the project store.
    #[command(subcommand)]
    Project(ProjectCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Prose,
    Json,
    Dot,
    Svg,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    /// Input file, or `-` for standard input.
    input: PathBuf,
    /// Input format; guessed from the extension and content when omitted.
    #[arg(long, value_parser = ["prose", "json"])]
    from: Option<String>,
    /// Output format; defaults to JSON for prose input and prose otherwise.
    #[arg(long, value_enum)]
    to: Option<Format>,
    /// Output file; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Input file (prose or JSON), or `-` for standard input.
    input: PathBuf,
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(_) => Err(format!("`{s}` is not a positive integer")),
    }
}

#[derive(Debug, Clone, Args)]
struct BackendArgs {
    /// TOML file with one `[backends.NAME]` table per generation backend.
    #[arg(long, env = "GSNKIT_BACKENDS")]
    backend_config: Option<PathBuf>,
    /// Chat-completions URL for a backend not listed in the config file.
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name sent with `--endpoint`.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    /// Environment variable holding the API key.
    #[arg(long)]
    credential_env: Option<String>,
    /// Upper bound on concurrent calls per backend.
    #[arg(long, default_value_t = gsnkit_service::DEFAULT_MAX_CONCURRENT_BACKEND_CALLS, value_parser = positive)]
    max_concurrent: usize,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Assurance case file.
    #[arg(long)]
    case: PathBuf,
    /// Pattern file; repeat for several candidates.
    #[arg(long, required = true)]
    pattern: Vec<PathBuf>,
    /// Shared threshold for BLEU and cosine.
    #[arg(long, value_parser = unit_interval)]
    threshold: Option<f64>,
    #[arg(long, value_parser = unit_interval)]
    threshold_bleu: Option<f64>,
    #[arg(long, value_parser = unit_interval)]
    threshold_cosine: Option<f64>,
    #[arg(long, default_value_t = 1, value_parser = positive)]
    runs: usize,
    /// `deterministic`, or a generation backend whose verdicts are recorded alongside.
    #[arg(long, default_value = DETERMINISTIC)]
    backend: String,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    format: ReportFormat,
    #[command(flatten)]
    backends: BackendArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
struct InstantiateArgs {
    #[arg(long)]
    pattern: PathBuf,
    /// Domain knowledge TOML file: `system`, `facts` and a `[bindings]` table.
    #[arg(long)]
    knowledge: PathBuf,
    /// `substitute` for plain placeholder substitution, or a generation backend.
    #[arg(long, default_value = SUBSTITUTE)]
    backend: String,
    #[arg(long, value_enum, default_value_t = Format::Prose)]
    to: Format,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    backends: BackendArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TableFormat {
    Table,
    Jsonl,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Corpus directory with `cases/`, `patterns/`, `truth.toml` and optional
    /// `knowledge/`; the bundled corpus when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', value_parser = unit_interval, default_values_t = gsnkit_service::DEFAULT_THRESHOLDS)]
    thresholds: Vec<f64>,
    #[arg(long, default_value_t = gsnkit_service::DEFAULT_EVALUATION_RUNS, value_parser = positive)]
    runs: usize,
    /// Backends to evaluate; repeatable.
    #[arg(long = "backend", default_value = DETERMINISTIC)]
    backend_names: Vec<String>,
    /// Offer every corpus pattern to every case.
    #[arg(long)]
    all_candidates: bool,
    #[arg(long, value_enum, default_value_t = TableFormat::Table)]
    format: TableFormat,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    backends: BackendArgs,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Project store root.
    #[arg(long, env = STORE_ENV)]
    store: PathBuf,
    /// Allowed browser origin; repeatable.
    #[arg(long = "cors-origin")]
    cors_origins: Vec<String>,
    #[command(flatten)]
    backends: BackendArgs,
}

#[derive(Debug, Args)]
struct StoreArgs {
    #[arg(long, env = STORE_ENV)]
    store: PathBuf,
}

#[derive(Debug, Subcommand)]
enum ProjectCommand {
    /// List project names.
    List(StoreArgs),
    /// Print a project as JSON.
    Show {
        name: String,
        /// Revision id; HEAD when omitted.
        #[arg(long)]
        revision: Option<String>,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// List revisions, oldest first.
    History {
        name: String,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Delete all but the newest `keep` revisions.
    Prune {
        name: String,
        #[arg(long, value_parser = positive)]
        keep: usize,
        #[command(flatten)]
        store: StoreArgs,
    },
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, S>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(rendered.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = stderr.write_all(rendered.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("GSNKIT_LOG")
        .try_init();

    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    match command {
        Command::Convert(a) => convert(a, out, err),
        Command::Validate(a) => validate_cmd(a, out, err),
        Command::Stats(a) => {
            let doc = read_document(&a.input, None, err)?;
            writeln!(out, "{}", pretty(&statistics(doc.structure())))?;
            Ok(())
        }
        Command::Detect(a) => detect_cmd(a, out, err),
        Command::Instantiate(a) => instantiate_cmd(a, out, err),
        Command::Evaluate(a) => evaluate_cmd(a, out, err),
        Command::Serve(a) => serve(a),
        Command::Project(p) => project_cmd(p, out),
    }
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes")
}

fn read_input(path: &Path) -> CliResult<String> {
    if path == Path::new("-") {
        let mut text = String::new();
        io::Read::read_to_string(&mut io::stdin(), &mut text)?;
        return Ok(text);
    }
    fs::read_to_string(path).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn write_output(path: Option<&Path>, text: &str, out: &mut dyn Write) -> CliResult {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Domain(format!("{}: {e}", p.display()))),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

/// Reads a prose or JSON document, writing prose diagnostics to `err`.
/// Returns the document with the number of error diagnostics.
fn read_document_lenient(path: &Path, from: Option<&str>, err: &mut dyn Write) -> CliResult<(Document, usize)> {
    let text = read_input(path)?;
    let is_json = match from {
        Some(f) => f == "json",
        None => path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{'),
    };
    if is_json {
        let doc = serde_json::from_str(&text)
            .map_err(|e| CliError::Domain(format!("{}: invalid document JSON: {e}", path.display())))?;
        return Ok((doc, 0));
    }
    let outcome = codec::parse(&text);
    for d in &outcome.diagnostics {
        writeln!(err, "{}:{d}", path.display())?;
    }
    let errors = outcome.errors().count();
    Ok((outcome.document, errors))
}

/// Like [`read_document_lenient`], but any parse error fails the command.
fn read_document(path: &Path, from: Option<&str>, err: &mut dyn Write) -> CliResult<Document> {
    match read_document_lenient(path, from, err)? {
        (doc, 0) => Ok(doc),
        (_, n) => Err(CliError::Domain(format!("{}: {n} parse error(s)", path.display()))),
    }
}

fn read_pattern(path: &Path, err: &mut dyn Write) -> CliResult<PatternDocument> {
    match read_document(path, None, err)? {
        Document::Pattern(p) => Ok(p),
        Document::AssuranceCase(s) => {
            PatternDocument::new(s).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
        }
    }
}

fn render(doc: &Document, format: Format) -> CliResult<String> {
    let text = match format {
        Format::Prose => codec::serialize(doc).map(|t| t.to_string()),
        Format::Json => Ok(pretty(doc) + "\n"),
        Format::Dot => codec::export_dot(doc.structure()),
        Format::Svg => codec::export_svg(doc.structure()),
    };
    text.map_err(|e| CliError::Domain(e.to_string()))
}

fn convert(a: ConvertArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let from_json = match a.from.as_deref() {
        Some(f) => f == "json",
        None => a.input.extension().is_some_and(|e| e == "json"),
    };
    let doc = read_document(&a.input, a.from.as_deref(), err)?;
    let to = a.to.unwrap_or(if from_json { Format::Prose } else { Format::Json });
    write_output(a.output.as_deref(), &render(&doc, to)?, out)
}

fn describe(v: &Violation) -> String {
    let sev = match v.severity {
        Severity::Error => "error",
        Severity::Warning => "warning",
    };
    if v.ids.is_empty() {
        format!("{sev}[{}]: {}", v.code, v.message)
    } else {
        format!("{sev}[{}] {}: {}", v.code, v.ids.join(", "), v.message)
    }
}

fn validate_cmd(a: InputArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let (doc, parse_errors) = read_document_lenient(&a.input, None, err)?;
    let s = doc.structure();
    let violations = validate(s);
    // Prose diagnostics already include the validation results.
    if parse_errors == 0 {
        for v in &violations {
            writeln!(err, "{}", describe(v))?;
        }
    }
    let errors = violations
        .iter()
        .filter(|v| v.severity == Severity::Error)
        .count()
        .max(parse_errors);
    let warnings = violations.len() - violations.iter().filter(|v| v.severity == Severity::Error).count();
    let verdict = if errors == 0 { "valid" } else { "invalid" };
    writeln!(
        out,
        "{verdict}: {} ({} elements, {} relationships, {errors} error(s), {warnings} warning(s))",
        s.name(),
        s.element_count(),
        s.relationship_count()
    )?;
    if errors > 0 {
        return Err(CliError::Domain(format!("{} failed validation", a.input.display())));
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BackendFile {
    #[serde(default)]
    backends: BTreeMap<String, toml::Table>,
}

const SECRET_KEYS: &[&str] = &["api_key", "apikey", "key", "token", "secret", "password", "authorization"];

/// Reads named backend configurations. Credentials are refused: the file
/// may only name the environment variable that holds them.
fn load_backend_file(path: &Path) -> CliResult<BTreeMap<String, GenerationBackendConfig>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let file: BackendFile =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (name, table) in file.backends {
        if let Some(k) = table.keys().find(|k| SECRET_KEYS.contains(&k.to_ascii_lowercase().as_str())) {
            return Err(CliError::Usage(format!(
                "{}: backend `{name}` sets `{k}`; put the credential in the environment variable named by `credential_env`",
                path.display()
            )));
        }
        let config: GenerationBackendConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Usage(format!("{}: backend `{name}`: {e}", path.display())))?;
        out.insert(name, config);
    }
    Ok(out)
}

impl BackendArgs {
    fn configs(&self) -> CliResult<BTreeMap<String, GenerationBackendConfig>> {
        match &self.backend_config {
            Some(p) => load_backend_file(p),
            None => Ok(BTreeMap::new()),
        }
    }

    fn resolve(&self, name: &str) -> CliResult<GenerationBackendConfig> {
        let mut config = match (self.configs()?.remove(name), &self.endpoint, &self.model) {
            (Some(c), _, _) => c,
            (None, Some(endpoint), Some(model)) => GenerationBackendConfig::new(endpoint, model),
            (None, Some(_), None) => return Err(CliError::Usage("--endpoint needs --model".into())),
            (None, _, _) => {
                return Err(CliError::Usage(format!(
                    "backend `{name}` is not configured; pass --backend-config or --endpoint and --model"
                )))
            }
        };
        if let Some(t) = self.temperature {
            config.temperature = t;
        }
        if let Some(m) = self.max_tokens {
            config.max_tokens = m;
        }
        if let Some(c) = &self.credential_env {
            config.credential_env = c.clone();
        }
        Ok(config)
    }

    fn build(&self, name: &str) -> CliResult<Arc<dyn GenerationBackend>> {
        let backend = ChatCompletionBackend::new(self.resolve(name)?).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(Arc::new(Bounded::new(backend, self.max_concurrent)))
    }
}

fn detect_cmd(a: DetectArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let case = read_document(&a.case, None, err)?.into_structure();
    let mut candidates = Vec::new();
    for p in &a.pattern {
        candidates.push(read_pattern(p, err)?);
    }
    let bleu = a.threshold_bleu.or(a.threshold);
    let cosine = a.threshold_cosine.or(a.threshold);
    let (Some(bleu), Some(cosine)) = (bleu, cosine) else {
        return Err(CliError::Usage(
            "set --threshold, or both --threshold-bleu and --threshold-cosine".into(),
        ));
    };
    let rule = DetectionRule::bleu_cosine(bleu, cosine).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut job = DetectionJob::new(case, candidates, rule).runs(a.runs);
    if a.backend != DETERMINISTIC {
        job = job.backend(a.backends.build(&a.backend)?);
    }
    let report = gsnkit::detection::detect(&job)?;
    match a.format {
        ReportFormat::Json => writeln!(out, "{}", pretty(&report))?,
        ReportFormat::Text => {
            writeln!(out, "case: {}", report.case)?;
            writeln!(out, "rule: bleu >= {} and cosine >= {}", format_score(bleu), format_score(cosine))?;
            writeln!(out, "runs: {}", report.runs)?;
            for c in &report.candidates {
                let verdict = if c.detected { "detected" } else { "not detected" };
                write!(out, "{}: {verdict} ({}/{})", c.pattern, c.detected_runs, report.runs)?;
                if let Some(first) = c.runs.first() {
                    for r in &first.results {
                        write!(out, " {}={:.4}", r.metric, r.value)?;
                    }
                }
                writeln!(out)?;
            }
        }
    }
    Ok(())
}

fn instantiate_cmd(a: InstantiateArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let pattern = read_pattern(&a.pattern, err)?;
    let text = read_input(&a.knowledge)?;
    let knowledge = DomainKnowledge::from_toml(&text)
        .map_err(|e| CliError::Domain(format!("{}: {e}", a.knowledge.display())))?;
    let structure = if a.backend == SUBSTITUTE {
        let mut s = substitute(&pattern, &knowledge.bindings);
        if !knowledge.system.trim().is_empty() {
            s.set_name(knowledge.system.trim());
        }
        s
    } else {
        let backend = a.backends.build(&a.backend)?;
        let generated = generate_case(&pattern, &knowledge, backend.as_ref())?;
        for d in &generated.diagnostics {
            writeln!(err, "reply:{d}")?;
        }
        generated.structure
    };
    for v in validate(&structure) {
        writeln!(err, "{}", describe(&v))?;
    }
    let doc = Document::AssuranceCase(structure);
    let rendered = match a.to {
        // Generated structures may not validate; fall back to JSON so the
        // result is never lost.
        Format::Prose => match codec::serialize(&doc) {
            Ok(t) => t.to_string(),
            Err(e) => {
                writeln!(err, "cannot write canonical prose ({e}); writing JSON")?;
                pretty(&doc) + "\n"
            }
        },
        other => render(&doc, other)?,
    };
    write_output(a.output.as_deref(), &rendered, out)
}

fn evaluate_cmd(a: EvaluateArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    let corpus = match &a.corpus {
        Some(dir) => Corpus::load(dir).map_err(|e| CliError::Domain(format!("{}: {e}", dir.display())))?,
        None => Corpus::bundled(),
    };
    let corpus = if a.all_candidates {
        corpus.with_all_candidates()
    } else {
        corpus
    };
    let mut backends = Vec::new();
    for name in &a.backend_names {
        if name == DETERMINISTIC {
            backends.push(EvaluationBackend::deterministic());
        } else {
            let mut b = EvaluationBackend::remote(a.backends.build(name)?);
            b.label = name.clone();
            backends.push(b);
        }
    }
    info!(
        "evaluating {} case(s) at {} threshold(s), {} run(s)",
        corpus.cases.len(),
        a.thresholds.len(),
        a.runs
    );
    let report = evaluate_corpus(&corpus, &a.thresholds, a.runs, &backends)?;
    let text = match a.format {
        TableFormat::Table => report.render_table(),
        TableFormat::Jsonl => report.to_jsonl(),
    };
    write_output(a.output.as_deref(), &text, out)?;
    let failed: Vec<_> = report.failed_rows().collect();
    for r in &failed {
        writeln!(
            err,
            "{} / {} / {}: {}",
            r.system,
            r.backend,
            format_score(r.threshold),
            r.error.as_deref().unwrap_or_default()
        )?;
    }
    if !failed.is_empty() {
        return Err(CliError::Backend(format!("{} evaluation cell(s) failed", failed.len())));
    }
    Ok(())
}

fn serve(a: ServeArgs) -> CliResult {
    let mut config = ServiceConfig::new(a.bind, a.store);
    config.cors_origins = a.cors_origins;
    config.backends = a.backends.configs()?;
    config.max_concurrent_backend_calls = a.backends.max_concurrent;
    if config.token.is_none() {
        log::warn!("{} is not set; the API accepts unauthenticated requests", gsnkit_service::TOKEN_ENV);
    }
    let service = Service::new(config).map_err(|e| CliError::Usage(e.to_string()))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(service.serve()).map_err(|e| CliError::Domain(e.to_string()))
}

fn project_cmd(command: ProjectCommand, out: &mut dyn Write) -> CliResult {
    match command {
        ProjectCommand::List(s) => {
            for name in ProjectStore::new(s.store).list()? {
                writeln!(out, "{name}")?;
            }
        }
        ProjectCommand::Show { name, revision, store } => {
            let revision = match revision {
                None => Revision::Latest,
                Some(id) => Revision::Id(id.parse().map_err(|e| CliError::Usage(format!("{e}")))?),
            };
            let project = ProjectStore::new(store.store).load(&name, &revision)?;
            writeln!(out, "{}", pretty(&project))?;
        }
        ProjectCommand::History { name, store } => {
            for entry in ProjectStore::new(store.store).history(&name)? {
                writeln!(out, "{} {}", entry.id, entry.modified)?;
            }
        }
        ProjectCommand::Prune { name, keep, store } => {
            for id in ProjectStore::new(store.store).prune(&name, keep)? {
                writeln!(out, "removed {id}")?;
            }
        }
    }
    Ok(())
}
