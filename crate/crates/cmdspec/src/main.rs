//! Command-line entry point.
//!
//! Subcommands mirror the pipeline stages (`infer`, `generate`, `trace`,
//! `derive`, `export`), plus `run` (full pipeline), `targeted` (one
//! invocation), and `coverage` (corpus matching).
//!
//! Exit codes: 0 success; 2 inference failure; 3 sandbox unavailable;
//! 4 partial derivation (undetermined keys present).

use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cmdspec::derive::{read_command_spec, spec_to_json};
use cmdspec::export::{export, ExportTarget};
use cmdspec::generate::{generate_configs, GenerationLimits};
use cmdspec::inference::{
    infer_syntax_spec, DocOrigin, DocSource, FailingBackend, FixtureBackend, LlmBackend,
    PromptConfig,
};
use cmdspec::normalize::{coverage_report, normalize_invocation, NormalizationRules, RuleKind};
use cmdspec::pipeline::{
    derive_from_traces, run_pipeline, targeted_spec, write_atomic, PipelineError,
    PipelineOptions, SyntaxSource,
};
use cmdspec::sandbox::{
    overlay_available, read_traces_ndjson, run_batch, write_traces_ndjson, SandboxMode,
    SyscallTable, TraceLimits,
};
use cmdspec::syntax::{parse_spec, serialize_spec};

const EXIT_INFERENCE: u8 = 2;
const EXIT_SANDBOX: u8 = 3;
const EXIT_PARTIAL: u8 = 4;

#[derive(Parser)]
#[command(name = "cmdspec", version, about = "Mine behavioral specifications of shell commands")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    /// Canned completions from --backend-dir (offline, deterministic).
    Fixture,
    /// HTTP completion endpoint from LLM_ENDPOINT/LLM_MODEL/LLM_API_KEY.
    Http,
    /// Always fails; for exercising error paths.
    Failing,
}

#[derive(Debug, Args)]
struct InferenceArgs {
    /// Command name the documentation describes.
    #[arg(long)]
    command: String,
    /// Read documentation via `man <command>` instead of stdin.
    #[arg(long)]
    man: bool,
    #[arg(long, value_enum, default_value = "fixture")]
    backend: BackendKind,
    /// Directory of canned completions for the fixture backend.
    #[arg(long)]
    backend_dir: Option<PathBuf>,
    /// Inference attempts before giving up.
    #[arg(long, default_value_t = 3)]
    retries: u32,
}

#[derive(Debug, Args)]
struct LimitArgs {
    /// Maximum flags plus options per generated invocation.
    #[arg(long, default_value_t = 4)]
    max_flags: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl LimitArgs {
    fn limits(&self) -> GenerationLimits {
        GenerationLimits {
            max_flags_options: self.max_flags,
            seed: self.seed,
            ..GenerationLimits::default()
        }
    }
}

#[derive(Debug, Args)]
struct TraceArgs {
    /// Worker threads for the trace stage.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Per-run wall-clock timeout in seconds.
    #[arg(long, default_value_t = 10)]
    timeout: u64,
    #[arg(long, value_enum, default_value = "copy")]
    mode: SandboxMode,
    /// JSON file overriding the built-in syscall classification table.
    #[arg(long)]
    syscall_set: Option<PathBuf>,
}

impl TraceArgs {
    fn trace_limits(&self) -> TraceLimits {
        TraceLimits {
            timeout: Duration::from_secs(self.timeout),
            ..TraceLimits::default()
        }
    }

    fn table(&self) -> Result<SyscallTable, String> {
        match &self.syscall_set {
            None => Ok(SyscallTable::default_table()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
                SyscallTable::from_json(&text).map_err(|e| e.to_string())
            }
        }
    }

    fn check_mode(&self) -> Result<(), String> {
        if self.mode == SandboxMode::Overlay && !overlay_available() {
            return Err("overlay sandbox unavailable on this system (try --mode copy)".into());
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Infer a syntax spec from documentation (stdin or --man).
    Infer {
        #[command(flatten)]
        inference: InferenceArgs,
        /// Output path for the .synspec.json artifact.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Generate invocation configurations from a syntax spec.
    Generate {
        /// Path to a .synspec.json file.
        #[arg(long)]
        syntax: PathBuf,
        #[command(flatten)]
        limits: LimitArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Execute configurations in the sandbox and record traces.
    Trace {
        /// Path to a configs JSON file produced by `generate`.
        #[arg(long)]
        configs: PathBuf,
        #[command(flatten)]
        trace: TraceArgs,
        /// Output path for traces.ndjson.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Derive a command spec from a trace archive.
    Derive {
        #[arg(long)]
        syntax: PathBuf,
        #[arg(long)]
        from_traces: PathBuf,
        #[command(flatten)]
        limits: LimitArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Translate a command spec into a consumer format.
    Export {
        /// Path to a .cmdspec.json file.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_enum)]
        export: ExportTarget,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run the full pipeline: doc → syntax → configs → traces → spec →
    /// exports.
    Run {
        #[command(flatten)]
        inference: InferenceArgs,
        /// Reuse a precomputed syntax spec instead of inferring.
        #[arg(long)]
        syntax: Option<PathBuf>,
        /// Skip generation/tracing and derive from this archive.
        #[arg(long)]
        from_traces: Option<PathBuf>,
        #[command(flatten)]
        limits: LimitArgs,
        #[command(flatten)]
        trace: TraceArgs,
        /// Export targets to emit (repeatable).
        #[arg(long, value_enum)]
        export: Vec<ExportTarget>,
        /// Output directory for all artifacts.
        #[arg(long, short, default_value = "out")]
        out: PathBuf,
    },
    /// Derive clauses for one concrete invocation.
    Targeted {
        #[arg(long)]
        syntax: PathBuf,
        /// The invocation, e.g. --targeted "rm -rf p".
        #[arg(long)]
        targeted: String,
        /// Serve the key from this cached full spec when present.
        #[arg(long)]
        cached_spec: Option<PathBuf>,
        #[command(flatten)]
        limits: LimitArgs,
        #[command(flatten)]
        trace: TraceArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Match a corpus of invocation lines against tested invocations.
    Coverage {
        #[arg(long)]
        syntax: PathBuf,
        /// Trace archive providing the tested invocations.
        #[arg(long)]
        from_traces: PathBuf,
        /// Corpus file, one invocation per line.
        #[arg(long)]
        corpus: PathBuf,
        /// Normalization rules to enable (default: all).
        #[arg(long, value_enum)]
        rules: Vec<CliRule>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CliRule {
    FlagOrder,
    Path,
    Integer,
    String,
    Arity,
}

impl From<CliRule> for RuleKind {
    fn from(r: CliRule) -> RuleKind {
        match r {
            CliRule::FlagOrder => RuleKind::FlagOrder,
            CliRule::Path => RuleKind::Path,
            CliRule::Integer => RuleKind::Integer,
            CliRule::String => RuleKind::String,
            CliRule::Arity => RuleKind::Arity,
        }
    }
}

fn read_doc(inference: &InferenceArgs) -> Result<DocSource, String> {
    let (text, origin) = if inference.man {
        let output = std::process::Command::new("man")
            .arg(&inference.command)
            .env("MANPAGER", "cat")
            .env("PAGER", "cat")
            .output()
            .map_err(|e| format!("cannot run man: {e}"))?;
        if !output.status.success() {
            return Err(format!("man {} failed", inference.command));
        }
        (String::from_utf8_lossy(&output.stdout).into_owned(), DocOrigin::Man)
    } else {
        let mut text = String::new();
        std::io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| format!("cannot read stdin: {e}"))?;
        (text, DocOrigin::File)
    };
    DocSource::new(&inference.command, text, origin).map_err(|e| e.to_string())
}

fn make_backend(inference: &InferenceArgs) -> Result<Box<dyn LlmBackend>, String> {
    match inference.backend {
        BackendKind::Fixture => {
            let dir = inference
                .backend_dir
                .clone()
                .ok_or("--backend fixture requires --backend-dir")?;
            Ok(Box::new(
                FixtureBackend::from_dir(&dir).map_err(|e| e.to_string())?,
            ))
        }
        BackendKind::Failing => Ok(Box::new(FailingBackend)),
        BackendKind::Http => {
            #[cfg(feature = "http-backend")]
            {
                Ok(Box::new(
                    cmdspec::inference::HttpBackend::from_env().map_err(|e| e.to_string())?,
                ))
            }
            #[cfg(not(feature = "http-backend"))]
            Err("built without the http-backend feature".to_string())
        }
    }
}

fn fail(message: impl std::fmt::Display, code: u8) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn pipeline_exit(err: PipelineError) -> ExitCode {
    let code = match &err {
        PipelineError::Inference { .. } | PipelineError::InferenceTransport(_) => EXIT_INFERENCE,
        _ => 1,
    };
    fail(err, code)
}

fn run() -> Result<ExitCode, String> {
    match Cli::parse().command {
        Command::Infer { inference, out } => {
            let doc = read_doc(&inference)?;
            let backend = make_backend(&inference)?;
            let report =
                infer_syntax_spec(&doc, backend.as_ref(), inference.retries, &PromptConfig::default())
                    .map_err(|e| e.to_string())?;
            match report.spec {
                Some(spec) => {
                    let text = serialize_spec(&spec).map_err(|e| e.to_string())?;
                    write_atomic(&out, text.as_bytes()).map_err(|e| e.to_string())?;
                    println!("wrote {}", out.display());
                    Ok(ExitCode::SUCCESS)
                }
                None => {
                    for attempt in &report.attempts {
                        for violation in &attempt.violations {
                            eprintln!("violation: {violation}");
                        }
                    }
                    Ok(ExitCode::from(EXIT_INFERENCE))
                }
            }
        }
        Command::Generate { syntax, limits, out } => {
            let spec = parse_spec(&std::fs::read_to_string(&syntax).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let limits = limits.limits();
            let configs: Vec<_> = generate_configs(&spec, &limits).collect();
            let mut text = serde_json::to_string_pretty(&configs).map_err(|e| e.to_string())?;
            text.push('\n');
            write_atomic(&out, text.as_bytes()).map_err(|e| e.to_string())?;
            println!("wrote {} ({} configs)", out.display(), configs.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Trace { configs, trace, out } => {
            if let Err(message) = trace.check_mode() {
                return Ok(fail(message, EXIT_SANDBOX));
            }
            let table = trace.table()?;
            let configs: Vec<cmdspec::generate::InvocationConfig> = serde_json::from_str(
                &std::fs::read_to_string(&configs).map_err(|e| e.to_string())?,
            )
            .map_err(|e| e.to_string())?;
            let traces = run_batch(&configs, trace.jobs, trace.mode, &trace.trace_limits(), &table);
            write_traces_ndjson(&out, &traces).map_err(|e| e.to_string())?;
            println!("wrote {} ({} traces)", out.display(), traces.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Derive {
            syntax,
            from_traces,
            limits,
            out,
        } => {
            let spec = parse_spec(&std::fs::read_to_string(&syntax).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let command =
                derive_from_traces(&from_traces, &spec, &limits.limits()).map_err(|e| e.to_string())?;
            write_atomic(&out, spec_to_json(&command).as_bytes()).map_err(|e| e.to_string())?;
            let undetermined = command.clauses.values().filter(|e| e.undetermined).count();
            println!("wrote {} ({} keys)", out.display(), command.clauses.len());
            if undetermined > 0 {
                eprintln!("{undetermined} key(s) undetermined");
                return Ok(ExitCode::from(EXIT_PARTIAL));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Export { spec, export: target, out } => {
            let command = read_command_spec(&spec).map_err(|e| e.to_string())?;
            write_atomic(&out, export(&command, target).as_bytes()).map_err(|e| e.to_string())?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            inference,
            syntax,
            from_traces,
            limits,
            trace,
            export: targets,
            out,
        } => {
            if let Err(message) = trace.check_mode() {
                return Ok(fail(message, EXIT_SANDBOX));
            }
            let mut opts = PipelineOptions::new(out);
            opts.limits = limits.limits();
            opts.trace_limits = trace.trace_limits();
            opts.mode = trace.mode;
            opts.jobs = trace.jobs;
            opts.retry_limit = inference.retries;
            opts.targets = targets;

            if let Some(traces_path) = from_traces {
                // replay: derivation + export only
                let syntax_path = syntax.ok_or("--from-traces requires --syntax")?;
                let spec = parse_spec(
                    &std::fs::read_to_string(&syntax_path).map_err(|e| e.to_string())?,
                )
                .map_err(|e| e.to_string())?;
                let command = derive_from_traces(&traces_path, &spec, &opts.limits)
                    .map_err(|e| e.to_string())?;
                std::fs::create_dir_all(&opts.out_dir).map_err(|e| e.to_string())?;
                let cmdspec_path = opts
                    .out_dir
                    .join(format!("{}.cmdspec.json", command.command_name));
                write_atomic(&cmdspec_path, spec_to_json(&command).as_bytes())
                    .map_err(|e| e.to_string())?;
                for target in &opts.targets {
                    let path = opts.out_dir.join(format!(
                        "{}.{}.{}",
                        command.command_name,
                        target.as_str(),
                        target.extension()
                    ));
                    write_atomic(&path, export(&command, *target).as_bytes())
                        .map_err(|e| e.to_string())?;
                }
                println!("replayed derivation into {}", opts.out_dir.display());
                let undetermined = command.clauses.values().filter(|e| e.undetermined).count();
                if undetermined > 0 {
                    eprintln!("{undetermined} key(s) undetermined");
                    return Ok(ExitCode::from(EXIT_PARTIAL));
                }
                return Ok(ExitCode::SUCCESS);
            }

            let source = match syntax {
                Some(path) => SyntaxSource::SpecFile(path),
                None => SyntaxSource::Doc(read_doc(&inference)?),
            };
            let backend = make_backend(&inference)?;
            match run_pipeline(source, Some(backend.as_ref()), &opts) {
                Ok(run) => {
                    for stage in &run.stages {
                        println!(
                            "stage {:<9} {}  {}ms  {}",
                            stage.name,
                            if stage.skipped { "cached" } else { "ran   " },
                            stage.wall_millis,
                            &stage.artifact_digest[..12]
                        );
                    }
                    println!("spec: {}", run.cmdspec_path.display());
                    if run.undetermined_keys > 0 {
                        eprintln!("{} key(s) undetermined", run.undetermined_keys);
                        return Ok(ExitCode::from(EXIT_PARTIAL));
                    }
                    Ok(ExitCode::SUCCESS)
                }
                Err(err) => Ok(pipeline_exit(err)),
            }
        }
        Command::Targeted {
            syntax,
            targeted,
            cached_spec,
            limits,
            trace,
            out,
        } => {
            if let Err(message) = trace.check_mode() {
                return Ok(fail(message, EXIT_SANDBOX));
            }
            let spec = parse_spec(&std::fs::read_to_string(&syntax).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let argv = cmdspec::normalize::split_corpus_line(&targeted)
                .ok_or("targeted invocation is empty or has unbalanced quotes")?;
            if let Some(cache_path) = cached_spec {
                let cached = read_command_spec(&cache_path).map_err(|e| e.to_string())?;
                if let Some(entry) = cmdspec::pipeline::targeted_from_cache(&cached, &argv)
                    .map_err(|e| e.to_string())?
                {
                    let mut text =
                        serde_json::to_string_pretty(entry).map_err(|e| e.to_string())?;
                    text.push('\n');
                    write_atomic(&out, text.as_bytes()).map_err(|e| e.to_string())?;
                    println!("wrote {} (from cache)", out.display());
                    return Ok(ExitCode::SUCCESS);
                }
            }
            let mut opts = PipelineOptions::new(out.parent().unwrap_or(&out).to_path_buf());
            opts.limits = limits.limits();
            opts.trace_limits = trace.trace_limits();
            opts.mode = trace.mode;
            opts.jobs = trace.jobs;
            let command = targeted_spec(&argv, &spec, &opts).map_err(|e| e.to_string())?;
            write_atomic(&out, spec_to_json(&command).as_bytes()).map_err(|e| e.to_string())?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Coverage {
            syntax,
            from_traces,
            corpus,
            rules,
        } => {
            let spec = parse_spec(&std::fs::read_to_string(&syntax).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let traces = read_traces_ndjson(&from_traces).map_err(|e| e.to_string())?;
            let tested: Vec<Vec<String>> =
                traces.into_iter().map(|t| t.invocation.argv).collect();
            let corpus_lines: Vec<String> = std::fs::read_to_string(&corpus)
                .map_err(|e| e.to_string())?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| l.to_string())
                .collect();
            let rule_set = if rules.is_empty() {
                NormalizationRules::all()
            } else {
                rules
                    .into_iter()
                    .fold(NormalizationRules::none(), |acc, r| acc.with(r.into()))
            };
            let report = coverage_report(&corpus_lines, &tested, &spec, &rule_set);
            println!("total     {}", report.total);
            println!("exact     {}", report.exact);
            for (kind, count) in &report.incremental {
                println!("+{:<9} {}", kind.as_str(), count);
            }
            println!("unmatched {}", report.unmatched);
            println!("unparsed  {}", report.unparsed);
            let matched = report.matched();
            if report.total > 0 {
                println!(
                    "matched   {matched}/{} ({:.2}%)",
                    report.total,
                    100.0 * matched as f64 / report.total as f64
                );
            }
            // demonstrate the canonical key for the first matched line
            if let Some(line) = corpus_lines.first() {
                if let Some(argv) = cmdspec::normalize::split_corpus_line(line) {
                    if let Ok(key) = normalize_invocation(&argv, &spec, &rule_set) {
                        println!("key[0]    {key}");
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(message) => fail(message, 1),
    }
}
