//! End-to-end orchestration: documentation → syntax spec → invocation
//! configs → traces → command spec → exports.
//!
//! Every stage writes its artifact atomically (temp file + rename) next
//! to a `.stamp` sidecar holding a digest of the stage's inputs. A rerun
//! with unchanged inputs finds a matching stamp and skips the stage, so
//! the pipeline is resumable from any persisted artifact. Later stages
//! hash earlier artifacts into their own stamps, forming a
//! tamper-evident provenance chain.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::derive::{assemble_spec, plan_followups, read_command_spec, CommandSpec};
use crate::export::{export, ExportTarget};
use crate::generate::{
    generate_configs, ConfigRole, FsState, GenerationLimits, InvocationConfig, PathKind,
    PathState,
};
use crate::inference::{infer_syntax_spec, DocSource, InferenceError, InferenceReport, LlmBackend, PromptConfig};
use crate::matcher::{match_invocation, MatchError};
use crate::sandbox::{
    read_traces_ndjson, run_batch, write_traces_ndjson, ExecutionTrace, SandboxMode, SyscallTable,
    TraceLimits,
};
use crate::syntax::{parse_spec, serialize_spec, SyntaxSpec};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("inference failed after {attempts} attempt(s); last violations: {last:?}")]
    Inference { attempts: usize, last: Vec<String> },
    #[error(transparent)]
    InferenceTransport(#[from] InferenceError),
    #[error("invocation does not parse: {0}")]
    Match(#[from] MatchError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("syntax artifact invalid: {0}")]
    Syntax(#[from] crate::syntax::SyntaxError),
    #[error("derivation failed: {0}")]
    Derive(#[from] crate::derive::DeriveError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub skipped: bool,
    pub wall_millis: u128,
    /// Digest of the artifact this stage produced (or reused).
    pub artifact_digest: String,
}

/// The record of one pipeline execution: completed stages, artifact
/// paths, and the settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub command_name: String,
    pub stages: Vec<StageRecord>,
    pub synspec_path: PathBuf,
    pub traces_path: PathBuf,
    pub cmdspec_path: PathBuf,
    pub export_paths: BTreeMap<String, PathBuf>,
    pub limits: GenerationLimits,
    pub seed: u64,
    /// Keys whose every trace errored before yielding an observation.
    pub undetermined_keys: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub out_dir: PathBuf,
    pub limits: GenerationLimits,
    pub trace_limits: TraceLimits,
    pub mode: SandboxMode,
    pub jobs: usize,
    pub retry_limit: u32,
    pub targets: Vec<ExportTarget>,
}

impl PipelineOptions {
    pub fn new(out_dir: PathBuf) -> Self {
        PipelineOptions {
            out_dir,
            limits: GenerationLimits::default(),
            trace_limits: TraceLimits::default(),
            mode: SandboxMode::Copy,
            jobs: 1,
            retry_limit: 3,
            targets: Vec::new(),
        }
    }
}

/// Either fresh documentation or an already-inferred syntax artifact.
#[derive(Debug, Clone)]
pub enum SyntaxSource {
    Doc(DocSource),
    Spec(SyntaxSpec),
    SpecFile(PathBuf),
}

// ---------------------------------------------------------------------
// atomic artifacts with digest stamps
// ---------------------------------------------------------------------

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to `path` atomically: temp file in the same directory,
/// then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut temp = tempfile::NamedTempFile::new_in(dir)?;
    std::io::Write::write_all(&mut temp, bytes)?;
    temp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn stamp_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".stamp");
    artifact.with_file_name(name)
}

/// True when `artifact` exists and its stamp matches `input_digest`.
fn stage_cached(artifact: &Path, input_digest: &str) -> bool {
    artifact.exists()
        && std::fs::read_to_string(stamp_path(artifact))
            .map(|s| s.trim() == input_digest)
            .unwrap_or(false)
}

fn write_stamp(artifact: &Path, input_digest: &str) -> std::io::Result<()> {
    write_atomic(&stamp_path(artifact), format!("{input_digest}\n").as_bytes())
}

struct Stage<'a> {
    run: &'a mut Vec<StageRecord>,
    name: &'static str,
    started: Instant,
}

impl<'a> Stage<'a> {
    fn begin(run: &'a mut Vec<StageRecord>, name: &'static str) -> Self {
        Stage {
            run,
            name,
            started: Instant::now(),
        }
    }

    fn finish(self, skipped: bool, artifact: &Path) -> std::io::Result<()> {
        let digest = sha256_hex(&std::fs::read(artifact)?);
        self.run.push(StageRecord {
            name: self.name.to_string(),
            skipped,
            wall_millis: self.started.elapsed().as_millis(),
            artifact_digest: digest,
        });
        Ok(())
    }
}

// ---------------------------------------------------------------------
// the pipeline
// ---------------------------------------------------------------------

fn limits_digest(opts: &PipelineOptions) -> String {
    sha256_hex(
        format!(
            "{:?}|{:?}|{:?}|{}",
            opts.limits, opts.trace_limits, opts.mode, opts.jobs
        )
        .as_bytes(),
    )
}

fn resolve_syntax(
    source: &SyntaxSource,
    backend: Option<&dyn LlmBackend>,
    opts: &PipelineOptions,
    synspec_path: &Path,
    stages: &mut Vec<StageRecord>,
) -> Result<SyntaxSpec, PipelineError> {
    let stage = Stage::begin(stages, "infer");
    match source {
        SyntaxSource::Spec(spec) => {
            let text = serialize_spec(spec)?;
            let input = sha256_hex(text.as_bytes());
            if !stage_cached(synspec_path, &input) {
                write_atomic(synspec_path, text.as_bytes())?;
                write_stamp(synspec_path, &input)?;
            }
            stage.finish(true, synspec_path)?;
            Ok(spec.clone())
        }
        SyntaxSource::SpecFile(path) => {
            let text = std::fs::read_to_string(path)?;
            let spec = parse_spec(&text)?;
            let input = sha256_hex(text.as_bytes());
            if !stage_cached(synspec_path, &input) {
                write_atomic(synspec_path, text.as_bytes())?;
                write_stamp(synspec_path, &input)?;
            }
            stage.finish(true, synspec_path)?;
            Ok(spec)
        }
        SyntaxSource::Doc(doc) => {
            let backend = backend.expect("doc source requires a backend");
            let input = sha256_hex(
                format!("{}|{}|{}", doc.command_name, doc.text, backend.model_id()).as_bytes(),
            );
            if stage_cached(synspec_path, &input) {
                let spec = parse_spec(&std::fs::read_to_string(synspec_path)?)?;
                stage.finish(true, synspec_path)?;
                return Ok(spec);
            }
            let report = infer_syntax_spec(doc, backend, opts.retry_limit, &PromptConfig::default())?;
            let Some(spec) = report.spec.clone() else {
                return Err(inference_failure(&report));
            };
            write_atomic(synspec_path, serialize_spec(&spec)?.as_bytes())?;
            write_stamp(synspec_path, &input)?;
            stage.finish(false, synspec_path)?;
            Ok(spec)
        }
    }
}

fn inference_failure(report: &InferenceReport) -> PipelineError {
    PipelineError::Inference {
        attempts: report.attempts.len(),
        last: report
            .attempts
            .last()
            .map(|a| a.violations.clone())
            .unwrap_or_default(),
    }
}

fn configs_digest(configs: &[InvocationConfig]) -> String {
    let mut hasher = Sha256::new();
    for config in configs {
        hasher.update(config.config_id.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

/// Runs the full pipeline, reusing any stage whose inputs are unchanged.
pub fn run_pipeline(
    source: SyntaxSource,
    backend: Option<&dyn LlmBackend>,
    opts: &PipelineOptions,
) -> Result<PipelineRun, PipelineError> {
    std::fs::create_dir_all(&opts.out_dir)?;
    let mut stages = Vec::new();

    // stage 1: syntax inference (or adoption of a precomputed spec)
    let synspec_path = opts.out_dir.join("command.synspec.json");
    let syntax = resolve_syntax(&source, backend, opts, &synspec_path, &mut stages)?;
    let command_name = syntax.command_name.clone();

    // stage 2: config generation (in memory; digest feeds the stamp)
    let stage = Stage::begin(&mut stages, "generate");
    let mut configs: Vec<InvocationConfig> = generate_configs(&syntax, &opts.limits).collect();
    let followups = plan_followups(&syntax, &configs);
    configs.extend(followups);
    let generate_digest = configs_digest(&configs);
    let configs_path = opts.out_dir.join("configs.json");
    let configs_text = {
        let mut t = serde_json::to_string_pretty(&configs).expect("configs serialize");
        t.push('\n');
        t
    };
    write_atomic(&configs_path, configs_text.as_bytes())?;
    stage.finish(false, &configs_path)?;

    // stage 3: tracing
    let stage = Stage::begin(&mut stages, "trace");
    let traces_path = opts.out_dir.join("traces.ndjson");
    let trace_input = format!(
        "{}|{}|{}",
        sha256_hex(std::fs::read(&synspec_path)?.as_slice()),
        generate_digest,
        limits_digest(opts)
    );
    let traces: Vec<ExecutionTrace>;
    if stage_cached(&traces_path, &trace_input) {
        traces = read_traces_ndjson(&traces_path)?;
        stage.finish(true, &traces_path)?;
    } else {
        let table = SyscallTable::default_table();
        traces = run_batch(&configs, opts.jobs, opts.mode, &opts.trace_limits, &table);
        write_traces_atomic(&traces_path, &traces)?;
        write_stamp(&traces_path, &trace_input)?;
        stage.finish(false, &traces_path)?;
    }

    // stage 4: derivation
    let stage = Stage::begin(&mut stages, "derive");
    let cmdspec_path = opts.out_dir.join(format!("{command_name}.cmdspec.json"));
    let derive_input = format!(
        "{}|{}",
        sha256_hex(std::fs::read(&traces_path)?.as_slice()),
        limits_digest(opts)
    );
    let spec;
    if stage_cached(&cmdspec_path, &derive_input) {
        spec = read_command_spec(&cmdspec_path)?;
        stage.finish(true, &cmdspec_path)?;
    } else {
        spec = assemble_spec(&syntax, &traces, &opts.limits)?;
        write_atomic(
            &cmdspec_path,
            crate::derive::spec_to_json(&spec).as_bytes(),
        )?;
        write_stamp(&cmdspec_path, &derive_input)?;
        stage.finish(false, &cmdspec_path)?;
    }

    // stage 5: exports
    let mut export_paths = BTreeMap::new();
    for target in &opts.targets {
        let stage = Stage::begin(&mut stages, "export");
        let path = opts.out_dir.join(format!(
            "{command_name}.{}.{}",
            target.as_str(),
            target.extension()
        ));
        let input = format!(
            "{}|{}",
            sha256_hex(std::fs::read(&cmdspec_path)?.as_slice()),
            target.as_str()
        );
        let cached = stage_cached(&path, &input);
        if !cached {
            write_atomic(&path, export(&spec, *target).as_bytes())?;
            write_stamp(&path, &input)?;
        }
        stage.finish(cached, &path)?;
        export_paths.insert(target.as_str().to_string(), path);
    }

    Ok(PipelineRun {
        command_name,
        stages,
        synspec_path,
        traces_path,
        cmdspec_path,
        export_paths,
        limits: opts.limits.clone(),
        seed: opts.limits.seed,
        undetermined_keys: spec.clauses.values().filter(|e| e.undetermined).count(),
    })
}

fn write_traces_atomic(path: &Path, traces: &[ExecutionTrace]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let temp = tempfile::NamedTempFile::new_in(dir)?;
    write_traces_ndjson(temp.path(), traces)?;
    temp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Replays derivation and export from a persisted trace archive.
pub fn derive_from_traces(
    traces_path: &Path,
    syntax: &SyntaxSpec,
    limits: &GenerationLimits,
) -> Result<CommandSpec, PipelineError> {
    let traces = read_traces_ndjson(traces_path)?;
    Ok(assemble_spec(syntax, &traces, limits)?)
}

// ---------------------------------------------------------------------
// targeted mode
// ---------------------------------------------------------------------

/// argv token indices holding path-typed values, with fresh slot names.
fn path_token_slots(
    syntax: &SyntaxSpec,
    argv: &[String],
) -> Result<Vec<(usize, String)>, MatchError> {
    let parsed = match_invocation(syntax, argv)?;
    // path-typed values in matcher order; argv preserves that order, so
    // consume the queue front on each matching token
    let mut queue: Vec<&str> = Vec::new();
    for option in &parsed.options {
        if option.value_type.effective().is_path() {
            queue.push(&option.value);
        }
    }
    for positional in &parsed.positionals {
        if positional.value_type.effective().is_path() {
            queue.push(&positional.value);
        }
    }
    let mut slots = Vec::new();
    let mut next = 0usize;
    for (idx, token) in argv.iter().enumerate().skip(1) {
        if next < queue.len() && token == queue[next] {
            slots.push((idx, format!("p{next}")));
            next += 1;
        }
    }
    Ok(slots)
}

/// Generates the full environment sweep for one concrete invocation and
/// derives its clauses. The returned spec contains exactly the keys
/// reachable from this argv (one per arity shape).
pub fn targeted_spec(
    argv: &[String],
    syntax: &SyntaxSpec,
    opts: &PipelineOptions,
) -> Result<CommandSpec, PipelineError> {
    let slots = path_token_slots(syntax, argv)?;

    // symbolic argv: concrete paths replaced by slot names
    let mut symbolic = argv.to_vec();
    for (idx, slot) in &slots {
        symbolic[*idx] = slot.clone();
    }

    let mut configs = Vec::new();
    let slot_names: Vec<String> = slots.iter().map(|(_, s)| s.clone()).collect();
    for env in crate::generate::environments_for_slots(slot_names.len()) {
        // environments_for_slots names slots p0..; they match ours
        let mut argv = symbolic.clone();
        let mut path_slots = Vec::new();
        for (idx, slot) in &slots {
            let state = env.slots[slot];
            argv[*idx] = render_slot(slot, state);
            path_slots.push((*idx, slot.clone()));
        }
        configs.push(InvocationConfig::new(
            argv,
            env,
            None,
            path_slots,
            ConfigRole::Sweep,
        ));
    }
    if configs.is_empty() {
        // no path slots: a single bare run
        configs.push(InvocationConfig::new(
            symbolic.clone(),
            FsState::empty(),
            None,
            Vec::new(),
            ConfigRole::Sweep,
        ));
    }
    let followups = plan_followups(syntax, &configs);
    configs.extend(followups);

    let table = SyscallTable::default_table();
    let traces = run_batch(&configs, opts.jobs, opts.mode, &opts.trace_limits, &table);
    Ok(assemble_spec(syntax, &traces, &opts.limits)?)
}

fn render_slot(slot: &str, state: PathState) -> String {
    let rel = FsState::rendered_path(slot, state.pointer);
    match state.path_kind {
        PathKind::Relative => rel,
        PathKind::Absolute => format!("/scratch/{rel}"),
    }
}

/// Returns the targeted key's entry from a cached full spec, if present.
pub fn targeted_from_cache<'a>(
    spec: &'a CommandSpec,
    argv: &[String],
) -> Result<Option<&'a crate::derive::KeyEntry>, MatchError> {
    let parsed = match_invocation(&spec.syntax, argv)?;
    let key = crate::derive::InvocationKey::from_parsed(&parsed);
    Ok(spec.clauses.get(&key.render()))
}
