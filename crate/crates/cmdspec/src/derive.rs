//! Specification derivation: turns collected [`ExecutionTrace`]s into a
//! universal [`CommandSpec`].
//!
//! The derivation rules, applied per invocation key (flag set + abstract
//! option/positional types):
//!
//! * **I/O sets** — a slot read by a read-class syscall is an input; a
//!   slot opened for writing is an output; stdin/stdout membership comes
//!   from actual read/write activity on descriptors 0 and 1.
//! * **Parallelizability** — side-effectful if any trace mutates the
//!   filesystem, issues a write-class call against a path, or consults
//!   the working directory; otherwise stateless when concatenating the
//!   outputs of line-partition runs reproduces the whole-input output
//!   bytewise, else pure.
//! * **Splittability** — a multi-path invocation is splittable when the
//!   concatenated outputs of its single-argument runs equal the combined
//!   run's output.
//! * **Filtering** — monotonically decreasing iff every output is
//!   strictly smaller than every input (vacuously true with no I/O, and
//!   flagged as such).
//! * **Conditions** — per environment, a precondition conjunction over
//!   slot states and a postcondition (exit class + final slot states);
//!   environments whose postcondition descriptor sets intersect slotwise
//!   within an exit class merge into one clause with a disjunctive
//!   precondition.
//!
//! Derivation is a pure function of the trace archive: replaying a
//! persisted `traces.ndjson` yields a byte-identical spec.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::content::{self, ContentKind, ContentSample, Variant};
use crate::generate::{
    ConfigRole, FsState, GenerationLimits, InvocationConfig, PathKind, PathState, PointerKind,
    ProbeKind,
};
use crate::matcher::{match_invocation, ParsedInvocation};
use crate::sandbox::{
    run_config, ExecutionTrace, ExitStatus, SandboxMode, SyscallClass, SyscallTable, TraceLimits,
};
use crate::syntax::SyntaxSpec;

#[derive(Debug, Error)]
pub enum DeriveError {
    #[error("trace archive is empty; nothing to derive")]
    EmptyArchive,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("sandbox failure during rule evaluation: {0}")]
    Sandbox(String),
}

// ---------------------------------------------------------------------
// keys
// ---------------------------------------------------------------------

/// Identifies one invocation shape: concrete path names and sampled
/// values are abstracted away, flags and type descriptors remain.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InvocationKey {
    /// Sorted primary flag names.
    pub flags: Vec<String>,
    /// (option name, value type descriptor), sorted by name.
    pub options: Vec<(String, String)>,
    /// Positional value type descriptors, in argument order.
    pub positionals: Vec<String>,
}

impl InvocationKey {
    pub fn from_parsed(parsed: &ParsedInvocation) -> Self {
        let mut options: Vec<(String, String)> = parsed
            .options
            .iter()
            .map(|o| (o.name.clone(), o.value_type.effective().type_name().into()))
            .collect();
        options.sort();
        options.dedup();
        InvocationKey {
            flags: parsed.flag_set(),
            options,
            positionals: parsed
                .positionals
                .iter()
                .map(|p| p.value_type.effective().type_name().to_string())
                .collect(),
        }
    }

    /// Stable textual form, used as the JSON map key.
    pub fn render(&self) -> String {
        let opts: Vec<String> = self
            .options
            .iter()
            .map(|(name, ty)| format!("{name}={ty}"))
            .collect();
        format!(
            "flags{{{}}} opts{{{}}} args[{}]",
            self.flags.join(","),
            opts.join(","),
            self.positionals.join(",")
        )
    }
}

// ---------------------------------------------------------------------
// clause vocabulary
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParallelClass {
    Stateless,
    Pure,
    SideEffectful,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitClass {
    Zero,
    Nonzero,
}

/// Final observed state of a path slot after execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotPost {
    Unchanged,
    File,
    Dir,
    Absent,
}

/// An input or output entity: a stream or a path slot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IoEntity {
    Stdin,
    Stdout,
    Slot(String),
}

impl fmt::Display for IoEntity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IoEntity::Stdin => write!(f, "stdin"),
            IoEntity::Stdout => write!(f, "stdout"),
            IoEntity::Slot(slot) => write!(f, "slot:{slot}"),
        }
    }
}

impl Serialize for IoEntity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for IoEntity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Ok(match text.as_str() {
            "stdin" => IoEntity::Stdin,
            "stdout" => IoEntity::Stdout,
            other => match other.strip_prefix("slot:") {
                Some(slot) => IoEntity::Slot(slot.to_string()),
                None => {
                    return Err(serde::de::Error::custom(format!(
                        "unknown io entity {text:?}"
                    )))
                }
            },
        })
    }
}

/// One merged pre/post-condition clause for an invocation key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionClause {
    /// slot → disjunction of initial pointer kinds (the precondition is
    /// the conjunction over slots).
    pub preconditions: BTreeMap<String, BTreeSet<String>>,
    pub exit_class: ExitClass,
    /// Concrete exit codes observed (128+signal for signaled runs).
    pub exit_codes: BTreeSet<i32>,
    /// slot → final state.
    pub postconditions: BTreeMap<String, SlotPost>,
    pub inputs: BTreeSet<IoEntity>,
    pub outputs: BTreeSet<IoEntity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelizability: Option<ParallelClass>,
    pub monotone_decreasing: bool,
    /// True when the filtering rule held only vacuously (no measurable
    /// input/output pair).
    pub monotone_vacuous: bool,
    pub cwd_dependent: bool,
    /// Number of distinct environments merged into this clause.
    pub merged_environments: usize,
}

/// Per-key derivation results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyEntry {
    pub key: InvocationKey,
    pub clauses: Vec<ConditionClause>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelizability: Option<ParallelClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splittable: Option<bool>,
    pub nondeterministic: bool,
    /// True when every trace for this key errored before producing an
    /// observation.
    pub undetermined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Digest over (config_id, exit) pairs of the archive, so replay
    /// from `traces.ndjson` reproduces it.
    pub archive_digest: String,
    pub trace_count: usize,
    /// Traces whose argv did not match the syntax spec.
    pub skipped_unmatched: usize,
    pub tool_version: String,
    pub limits: GenerationLimits,
}

/// The universal command specification (`.cmdspec.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandSpec {
    pub command_name: String,
    pub syntax: SyntaxSpec,
    /// Rendered invocation key → entry.
    pub clauses: BTreeMap<String, KeyEntry>,
    pub provenance: Provenance,
}

// ---------------------------------------------------------------------
// per-trace rules
// ---------------------------------------------------------------------

fn exit_code(status: &ExitStatus) -> Option<i32> {
    match status {
        ExitStatus::Exited { code } => Some(*code),
        ExitStatus::Signaled { signal } => Some(128 + signal),
        _ => None,
    }
}

/// Does `path` (a normalized syscall path) refer to `rendered` or a
/// descendant of it?
fn path_touches(path: &str, rendered: &str) -> bool {
    path == rendered
        || path
            .strip_prefix(rendered)
            .is_some_and(|rest| rest.starts_with('/'))
}

fn fd_of(record: &crate::sandbox::SyscallRecord) -> Option<i64> {
    record.args.first().and_then(|a| a.parse::<i64>().ok())
}

/// §6.3 I/O rule. Inputs: slots observed by successful read-class calls
/// plus stdin when descriptor 0 was read. Outputs: slots opened for
/// writing plus stdout when descriptor 1 was written. Mutations such as
/// unlink affect postconditions, not the output set.
pub fn derive_io(trace: &ExecutionTrace) -> (BTreeSet<IoEntity>, BTreeSet<IoEntity>) {
    let mut inputs = BTreeSet::new();
    let mut outputs = BTreeSet::new();
    for record in &trace.syscalls {
        match record.name.as_str() {
            "read" if fd_of(record) == Some(0) && record.return_value >= 0 => {
                inputs.insert(IoEntity::Stdin);
            }
            "write" if fd_of(record) == Some(1) && record.return_value > 0 => {
                outputs.insert(IoEntity::Stdout);
            }
            _ => {}
        }
    }
    let invocation = &trace.invocation;
    for (idx, slot) in &invocation.path_slots {
        let rendered = &invocation.argv[*idx];
        for record in &trace.syscalls {
            let Some(path) = &record.touched_path else {
                continue;
            };
            if !path_touches(path, rendered) || record.return_value < 0 {
                continue;
            }
            match record.classification {
                SyscallClass::Read => {
                    inputs.insert(IoEntity::Slot(slot.clone()));
                }
                SyscallClass::Write
                    if matches!(record.name.as_str(), "open" | "openat" | "creat") =>
                {
                    outputs.insert(IoEntity::Slot(slot.clone()));
                }
                _ => {}
            }
        }
    }
    (inputs, outputs)
}

/// §6.3 cwd rule: a getcwd record anywhere in the trace.
pub fn check_cwd_dependence(trace: &ExecutionTrace) -> bool {
    trace.syscalls.iter().any(|s| s.name == "getcwd")
}

/// A trace exhibits side effects when it mutates the filesystem, issues
/// a write-class call against any path, or depends on the working
/// directory (external state).
pub fn is_side_effectful_trace(trace: &ExecutionTrace) -> bool {
    !trace.fs_diff.is_empty()
        || trace
            .syscalls
            .iter()
            .any(|s| s.classification == SyscallClass::Write && s.touched_path.is_some())
        || check_cwd_dependence(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilteringResult {
    pub monotone_decreasing: bool,
    /// True when the quantifier domain was empty or unmeasurable.
    pub vacuous: bool,
}

fn input_size(trace: &ExecutionTrace, entity: &IoEntity) -> Option<usize> {
    let invocation = &trace.invocation;
    match entity {
        IoEntity::Stdin => Some(invocation.stdin.as_ref().map_or(0, |s| s.payload.len())),
        IoEntity::Slot(slot) => {
            let state = invocation.env.slots.get(slot)?;
            if state.pointer != PointerKind::File {
                return None;
            }
            Some(
                invocation
                    .slot_contents
                    .get(slot)
                    .map(|s| s.payload.len())
                    .unwrap_or_else(|| {
                        content::default_sample(ContentKind::Text).payload.len()
                    }),
            )
        }
        IoEntity::Stdout => None,
    }
}

/// §6.3 filtering rule, strict: ∀ inputs i, outputs o: |o| < |i|.
/// Output slots have no recorded post-size, so any slot output makes the
/// property unverifiable (false, not vacuous).
pub fn check_filtering(trace: &ExecutionTrace) -> FilteringResult {
    let (inputs, outputs) = derive_io(trace);
    if inputs.is_empty() || outputs.is_empty() {
        return FilteringResult {
            monotone_decreasing: true,
            vacuous: true,
        };
    }
    let mut in_sizes = Vec::new();
    for input in &inputs {
        match input_size(trace, input) {
            Some(size) => in_sizes.push(size),
            None => {
                return FilteringResult {
                    monotone_decreasing: false,
                    vacuous: false,
                }
            }
        }
    }
    let mut out_sizes = Vec::new();
    for output in &outputs {
        match output {
            IoEntity::Stdout => out_sizes.push(trace.stdout_bytes.len()),
            _ => {
                return FilteringResult {
                    monotone_decreasing: false,
                    vacuous: false,
                }
            }
        }
    }
    let monotone = out_sizes
        .iter()
        .all(|o| in_sizes.iter().all(|i| o < i));
    FilteringResult {
        monotone_decreasing: monotone,
        vacuous: false,
    }
}

// ---------------------------------------------------------------------
// probe planning and outcome
// ---------------------------------------------------------------------

/// Partition counts used by the parallelizability rule.
pub const PARTITION_COUNTS: [usize; 2] = [2, 3];

fn key_digest(key: &InvocationKey) -> String {
    let mut hasher = Sha256::new();
    hasher.update(key.render().as_bytes());
    hex::encode(&hasher.finalize()[..8])
}

fn partition_sample(payload: &[u8], index: usize, total: usize) -> ContentSample {
    ContentSample {
        kind: ContentKind::Text,
        variant: Variant::Partial,
        label: format!("part{index}of{total}"),
        payload: payload.to_vec(),
    }
}

fn file_env(slots: &[&str]) -> FsState {
    let mut map = BTreeMap::new();
    for slot in slots {
        map.insert(
            slot.to_string(),
            PathState {
                path_kind: PathKind::Relative,
                pointer: PointerKind::File,
            },
        );
    }
    FsState { slots: map }
}

/// Follow-up configs for a sweep: one repeat per invocation key for
/// nondeterminism detection, parallelizability probe groups where the
/// key has a single input channel, and splittability probe groups for
/// multi-path keys.
pub fn plan_followups(spec: &SyntaxSpec, sweep: &[InvocationConfig]) -> Vec<InvocationConfig> {
    let text = content::default_sample(ContentKind::Text);
    let mut seen_keys: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::new();

    for config in sweep {
        let Ok(parsed) = match_invocation(spec, &config.argv) else {
            continue;
        };
        let key = InvocationKey::from_parsed(&parsed);
        let rendered = key.render();
        if !seen_keys.insert(rendered) {
            continue;
        }
        let digest = key_digest(&key);

        // nondeterminism check: replay the representative config
        out.push(
            InvocationConfig::new(
                config.argv.clone(),
                config.env.clone(),
                config.stdin.clone(),
                config.path_slots.clone(),
                ConfigRole::Repeat,
            )
            .with_slot_contents(config.slot_contents.clone()),
        );

        // parallelizability probes need a single input channel
        if config.path_slots.is_empty() {
            // stdin channel
            for &n in &PARTITION_COUNTS {
                let group = format!("{digest}:parallel{n}");
                out.push(InvocationConfig::new(
                    config.argv.clone(),
                    FsState::empty(),
                    Some(text.clone()),
                    Vec::new(),
                    ConfigRole::Probe {
                        group: group.clone(),
                        kind: ProbeKind::ParallelWhole,
                    },
                ));
                for (i, part) in content::line_partitions(&text.payload, n).iter().enumerate() {
                    out.push(InvocationConfig::new(
                        config.argv.clone(),
                        FsState::empty(),
                        Some(partition_sample(part, i, n)),
                        Vec::new(),
                        ConfigRole::Probe {
                            group: group.clone(),
                            kind: ProbeKind::ParallelPart {
                                index: i as u32,
                                total: n as u32,
                            },
                        },
                    ));
                }
            }
        } else if config.path_slots.len() == 1 {
            // single path argument as the input channel
            let (idx, _) = config.path_slots[0].clone();
            let mut argv = config.argv.clone();
            argv[idx] = "p0".to_string();
            let path_slots = vec![(idx, "p0".to_string())];
            for &n in &PARTITION_COUNTS {
                let group = format!("{digest}:parallel{n}");
                let mut whole_contents = BTreeMap::new();
                whole_contents.insert("p0".to_string(), text.clone());
                out.push(
                    InvocationConfig::new(
                        argv.clone(),
                        file_env(&["p0"]),
                        None,
                        path_slots.clone(),
                        ConfigRole::Probe {
                            group: group.clone(),
                            kind: ProbeKind::ParallelWhole,
                        },
                    )
                    .with_slot_contents(whole_contents),
                );
                for (i, part) in content::line_partitions(&text.payload, n).iter().enumerate() {
                    let mut contents = BTreeMap::new();
                    contents.insert("p0".to_string(), partition_sample(part, i, n));
                    out.push(
                        InvocationConfig::new(
                            argv.clone(),
                            file_env(&["p0"]),
                            None,
                            path_slots.clone(),
                            ConfigRole::Probe {
                                group: group.clone(),
                                kind: ProbeKind::ParallelPart {
                                    index: i as u32,
                                    total: n as u32,
                                },
                            },
                        )
                        .with_slot_contents(contents),
                    );
                }
            }
        }

        // splittability probes for multi-path keys
        if config.path_slots.len() >= 2 {
            let n = config.path_slots.len();
            let group = format!("{digest}:split");
            let parts = content::line_partitions(&text.payload, n);
            let mut argv = config.argv.clone();
            let mut slots = Vec::new();
            let mut contents = BTreeMap::new();
            for (i, (idx, _)) in config.path_slots.iter().enumerate() {
                let slot = format!("p{i}");
                argv[*idx] = slot.clone();
                slots.push(slot.clone());
                contents.insert(slot.clone(), partition_sample(&parts[i], i, n));
            }
            let slot_refs: Vec<&str> = slots.iter().map(|s| s.as_str()).collect();
            out.push(
                InvocationConfig::new(
                    argv.clone(),
                    file_env(&slot_refs),
                    None,
                    config
                        .path_slots
                        .iter()
                        .enumerate()
                        .map(|(i, (idx, _))| (*idx, format!("p{i}")))
                        .collect(),
                    ConfigRole::Probe {
                        group: group.clone(),
                        kind: ProbeKind::SplitWhole,
                    },
                )
                .with_slot_contents(contents),
            );
            for i in 0..n {
                // single-argument run: drop every other path token
                let mut part_argv = Vec::new();
                let drop_indices: BTreeSet<usize> = config
                    .path_slots
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, (idx, _))| *idx)
                    .collect();
                let keep_index = config.path_slots[i].0;
                let mut slot_pos = 0usize;
                for (t, token) in argv.iter().enumerate() {
                    if drop_indices.contains(&t) {
                        continue;
                    }
                    if t == keep_index {
                        slot_pos = part_argv.len();
                        part_argv.push("p0".to_string());
                    } else {
                        part_argv.push(token.clone());
                    }
                }
                let mut contents = BTreeMap::new();
                contents.insert("p0".to_string(), partition_sample(&parts[i], i, n));
                out.push(
                    InvocationConfig::new(
                        part_argv,
                        file_env(&["p0"]),
                        None,
                        vec![(slot_pos, "p0".to_string())],
                        ConfigRole::Probe {
                            group: group.clone(),
                            kind: ProbeKind::SplitPart { index: i as u32 },
                        },
                    )
                    .with_slot_contents(contents),
                );
            }
        }
    }
    out
}

/// Whole-vs-parts outcome: Some(true) when every run exited zero and the
/// concatenated part outputs equal the whole output bytewise.
fn concat_outcome(whole: &ExecutionTrace, parts: &[&ExecutionTrace]) -> Option<bool> {
    if !whole.exit_status.observable() || parts.iter().any(|p| !p.exit_status.observable()) {
        return None;
    }
    if !whole.exit_status.success() || parts.iter().any(|p| !p.exit_status.success()) {
        return Some(false);
    }
    let mut joined = Vec::new();
    for part in parts {
        joined.extend_from_slice(&part.stdout_bytes);
    }
    Some(joined == whole.stdout_bytes)
}

// ---------------------------------------------------------------------
// live rule evaluation (runs probe configs itself)
// ---------------------------------------------------------------------

/// Where the input stream of an invocation lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputChannel {
    Stdin,
    /// argv index of the single path argument.
    PathArg(usize),
}

fn run_for_classification(
    config: &InvocationConfig,
    mode: SandboxMode,
    limits: &TraceLimits,
    table: &SyscallTable,
) -> Result<ExecutionTrace, DeriveError> {
    let trace = run_config(config, mode, limits, table);
    if !trace.exit_status.observable() {
        return Err(DeriveError::Sandbox(
            trace
                .error
                .unwrap_or_else(|| "run produced no observation".into()),
        ));
    }
    Ok(trace)
}

/// §6.3 parallelizability rule, evaluated live: runs the invocation on
/// the whole content and on each line-partition, in its own sandbox per
/// run, and compares concatenated outputs.
pub fn classify_parallelizability(
    argv: &[String],
    channel: InputChannel,
    content: &ContentSample,
    partitions: &[usize],
    mode: SandboxMode,
    limits: &TraceLimits,
    table: &SyscallTable,
) -> Result<ParallelClass, DeriveError> {
    if partitions.is_empty() || partitions.iter().any(|&n| n < 2) {
        return Err(DeriveError::Precondition(
            "parallelizability needs at least one partition count n ≥ 2".into(),
        ));
    }
    let make_config = |payload: &ContentSample| -> InvocationConfig {
        match channel {
            InputChannel::Stdin => InvocationConfig::new(
                argv.to_vec(),
                FsState::empty(),
                Some(payload.clone()),
                Vec::new(),
                ConfigRole::Sweep,
            ),
            InputChannel::PathArg(idx) => {
                let mut argv = argv.to_vec();
                argv[idx] = "p0".to_string();
                let mut contents = BTreeMap::new();
                contents.insert("p0".to_string(), payload.clone());
                InvocationConfig::new(
                    argv,
                    file_env(&["p0"]),
                    None,
                    vec![(idx, "p0".to_string())],
                    ConfigRole::Sweep,
                )
                .with_slot_contents(contents)
            }
        }
    };

    let whole = run_for_classification(&make_config(content), mode, limits, table)?;
    let mut traces = vec![whole.clone()];
    let mut stateless = true;
    for &n in partitions {
        let mut part_traces = Vec::new();
        for (i, part) in content::line_partitions(&content.payload, n)
            .iter()
            .enumerate()
        {
            let sample = partition_sample(part, i, n);
            part_traces.push(run_for_classification(
                &make_config(&sample),
                mode,
                limits,
                table,
            )?);
        }
        let refs: Vec<&ExecutionTrace> = part_traces.iter().collect();
        if concat_outcome(&whole, &refs) != Some(true) {
            stateless = false;
        }
        traces.extend(part_traces);
    }
    if traces.iter().any(is_side_effectful_trace) {
        return Ok(ParallelClass::SideEffectful);
    }
    Ok(if stateless {
        ParallelClass::Stateless
    } else {
        ParallelClass::Pure
    })
}

/// §6.3 splittability rule, evaluated live: the combined run on files
/// a_0..a_{n-1} versus the concatenation of single-argument runs.
pub fn check_splittability(
    argv: &[String],
    path_indices: &[usize],
    contents: &[ContentSample],
    mode: SandboxMode,
    limits: &TraceLimits,
    table: &SyscallTable,
) -> Result<bool, DeriveError> {
    let n = path_indices.len();
    if n < 2 || contents.len() != n {
        return Err(DeriveError::Precondition(
            "splittability needs n ≥ 2 path arguments with one content each".into(),
        ));
    }
    // combined run
    let mut whole_argv = argv.to_vec();
    let mut slots = Vec::new();
    let mut slot_map = BTreeMap::new();
    let mut path_slots = Vec::new();
    for (i, idx) in path_indices.iter().enumerate() {
        let slot = format!("p{i}");
        whole_argv[*idx] = slot.clone();
        slot_map.insert(slot.clone(), contents[i].clone());
        path_slots.push((*idx, slot.clone()));
        slots.push(slot);
    }
    let slot_refs: Vec<&str> = slots.iter().map(|s| s.as_str()).collect();
    let whole_config = InvocationConfig::new(
        whole_argv,
        file_env(&slot_refs),
        None,
        path_slots,
        ConfigRole::Sweep,
    )
    .with_slot_contents(slot_map);
    let whole = run_for_classification(&whole_config, mode, limits, table)?;

    // single-argument runs, in argument order
    let mut parts = Vec::new();
    for (i, keep) in path_indices.iter().enumerate() {
        let drop: BTreeSet<usize> = path_indices
            .iter()
            .filter(|idx| *idx != keep)
            .copied()
            .collect();
        let mut part_argv = Vec::new();
        let mut slot_pos = 0usize;
        for (t, token) in argv.iter().enumerate() {
            if drop.contains(&t) {
                continue;
            }
            if t == *keep {
                slot_pos = part_argv.len();
                part_argv.push("p0".to_string());
            } else {
                part_argv.push(token.clone());
            }
        }
        let mut slot_map = BTreeMap::new();
        slot_map.insert("p0".to_string(), contents[i].clone());
        let config = InvocationConfig::new(
            part_argv,
            file_env(&["p0"]),
            None,
            vec![(slot_pos, "p0".to_string())],
            ConfigRole::Sweep,
        )
        .with_slot_contents(slot_map);
        parts.push(run_for_classification(&config, mode, limits, table)?);
    }
    let refs: Vec<&ExecutionTrace> = parts.iter().collect();
    Ok(concat_outcome(&whole, &refs) == Some(true))
}

// ---------------------------------------------------------------------
// clause derivation
// ---------------------------------------------------------------------

fn initial_slot_post(pointer: PointerKind) -> SlotPost {
    match pointer {
        PointerKind::File => SlotPost::File,
        PointerKind::DirEmpty | PointerKind::DirOneChild => SlotPost::Dir,
        PointerKind::Nonexistent | PointerKind::ParentNonexistent => SlotPost::Absent,
    }
}

/// Final state of the rendered slot path, from the trace's diff.
fn final_slot_post(trace: &ExecutionTrace, rendered: &str, initial: SlotPost) -> (SlotPost, bool) {
    use crate::sandbox::ChangeKind::*;
    let mut current = initial;
    let mut changed = false;
    for entry in &trace.fs_diff {
        if entry.path != rendered {
            continue;
        }
        changed = true;
        current = match entry.change {
            FileRemoved | DirectoryRemoved => SlotPost::Absent,
            FileCreated | FileModified | DirectoryReplacedWithFile => SlotPost::File,
            DirectoryCreated | FileReplacedWithDirectory => SlotPost::Dir,
        };
    }
    // child-only changes (e.g. files created inside a directory slot)
    // count as a change with the slot kind preserved
    if !changed
        && trace
            .fs_diff
            .iter()
            .any(|e| path_touches(&e.path, rendered) && e.path != rendered)
    {
        changed = true;
    }
    (current, changed)
}

struct ProtoClause {
    pre: BTreeMap<String, BTreeSet<String>>,
    exit_class: ExitClass,
    exit_codes: BTreeSet<i32>,
    /// slot → admissible postcondition descriptors.
    posts: BTreeMap<String, BTreeSet<SlotPost>>,
    inputs: BTreeSet<IoEntity>,
    outputs: BTreeSet<IoEntity>,
    monotone_all: bool,
    vacuous_all: bool,
    cwd_any: bool,
    env_count: usize,
    sort_token: String,
}

fn proto_from_trace(trace: &ExecutionTrace) -> Option<ProtoClause> {
    let code = exit_code(&trace.exit_status)?;
    let exit_class = if code == 0 {
        ExitClass::Zero
    } else {
        ExitClass::Nonzero
    };
    let invocation = &trace.invocation;
    let mut pre = BTreeMap::new();
    let mut posts = BTreeMap::new();
    for (idx, slot) in &invocation.path_slots {
        let state = invocation.env.slots.get(slot)?;
        let rendered = &invocation.argv[*idx];
        pre.insert(
            slot.clone(),
            BTreeSet::from([state.pointer.as_str().to_string()]),
        );
        let initial = initial_slot_post(state.pointer);
        let (final_state, changed) = final_slot_post(trace, rendered, initial);
        let mut set = BTreeSet::new();
        if changed {
            set.insert(final_state);
        } else {
            // an untouched slot is describable both as "unchanged" and
            // by its (identical) final state; merging picks whichever
            // intersects the partner clauses
            set.insert(SlotPost::Unchanged);
            set.insert(final_state);
        }
        posts.insert(slot.clone(), set);
    }
    let (inputs, outputs) = derive_io(trace);
    let filtering = check_filtering(trace);
    let sort_token = format!(
        "{exit_class:?}|{}|{}",
        invocation.env.descriptor().values().cloned().collect::<Vec<_>>().join(","),
        trace.config_id
    );
    Some(ProtoClause {
        pre,
        exit_class,
        exit_codes: BTreeSet::from([code]),
        posts,
        inputs,
        outputs,
        monotone_all: filtering.monotone_decreasing,
        vacuous_all: filtering.vacuous,
        cwd_any: check_cwd_dependence(trace),
        env_count: 1,
        sort_token,
    })
}

fn try_merge(target: &mut ProtoClause, other: &ProtoClause) -> bool {
    if target.exit_class != other.exit_class {
        return false;
    }
    if target.posts.keys().ne(other.posts.keys()) {
        return false;
    }
    let mut merged_posts = BTreeMap::new();
    for (slot, set) in &target.posts {
        let intersection: BTreeSet<SlotPost> =
            set.intersection(&other.posts[slot]).copied().collect();
        if intersection.is_empty() {
            return false;
        }
        merged_posts.insert(slot.clone(), intersection);
    }
    target.posts = merged_posts;
    for (slot, kinds) in &other.pre {
        target
            .pre
            .entry(slot.clone())
            .or_default()
            .extend(kinds.iter().cloned());
    }
    target.exit_codes.extend(other.exit_codes.iter().copied());
    target.inputs.extend(other.inputs.iter().cloned());
    target.outputs.extend(other.outputs.iter().cloned());
    target.monotone_all &= other.monotone_all;
    target.vacuous_all &= other.vacuous_all;
    target.cwd_any |= other.cwd_any;
    target.env_count += other.env_count;
    true
}

fn render_post(set: &BTreeSet<SlotPost>) -> SlotPost {
    // "unchanged" is the strongest claim; prefer it when admissible
    if set.contains(&SlotPost::Unchanged) {
        SlotPost::Unchanged
    } else {
        *set.iter().next().expect("nonempty descriptor set")
    }
}

/// Derives the merged clause list for one invocation key from its sweep
/// traces, per the §6.3 condition rule.
pub fn derive_conditions(traces: &[&ExecutionTrace]) -> Vec<ConditionClause> {
    let mut protos: Vec<ProtoClause> = traces.iter().filter_map(|t| proto_from_trace(t)).collect();
    protos.sort_by(|a, b| a.sort_token.cmp(&b.sort_token));

    let mut merged: Vec<ProtoClause> = Vec::new();
    'outer: for proto in protos {
        for existing in merged.iter_mut() {
            if try_merge(existing, &proto) {
                continue 'outer;
            }
        }
        merged.push(proto);
    }

    let mut clauses: Vec<ConditionClause> = merged
        .into_iter()
        .map(|p| ConditionClause {
            preconditions: p.pre,
            exit_class: p.exit_class,
            exit_codes: p.exit_codes,
            postconditions: p
                .posts
                .iter()
                .map(|(slot, set)| (slot.clone(), render_post(set)))
                .collect(),
            inputs: p.inputs,
            outputs: p.outputs,
            parallelizability: None,
            monotone_decreasing: p.monotone_all,
            monotone_vacuous: p.vacuous_all,
            cwd_dependent: p.cwd_any,
            merged_environments: p.env_count,
        })
        .collect();
    clauses.sort_by(|a, b| {
        (&a.exit_class, &a.preconditions, &a.postconditions).cmp(&(
            &b.exit_class,
            &b.preconditions,
            &b.postconditions,
        ))
    });
    clauses
}

// ---------------------------------------------------------------------
// spec assembly
// ---------------------------------------------------------------------

struct ProbeGroup<'a> {
    whole: Option<&'a ExecutionTrace>,
    parts: BTreeMap<u32, &'a ExecutionTrace>,
    split: bool,
}

fn archive_digest(traces: &[ExecutionTrace]) -> String {
    let mut items: Vec<String> = traces
        .iter()
        .map(|t| format!("{}:{:?}", t.config_id, t.exit_status))
        .collect();
    items.sort();
    let mut hasher = Sha256::new();
    for item in items {
        hasher.update(item.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

/// Applies every derivation rule to a full trace archive.
pub fn assemble_spec(
    syntax: &SyntaxSpec,
    traces: &[ExecutionTrace],
    limits: &GenerationLimits,
) -> Result<CommandSpec, DeriveError> {
    if traces.is_empty() {
        return Err(DeriveError::EmptyArchive);
    }

    // group by invocation key
    let mut by_key: BTreeMap<String, (InvocationKey, Vec<&ExecutionTrace>)> = BTreeMap::new();
    let mut skipped_unmatched = 0usize;
    for trace in traces {
        match match_invocation(syntax, &trace.invocation.argv) {
            Ok(parsed) => {
                let key = InvocationKey::from_parsed(&parsed);
                by_key
                    .entry(key.render())
                    .or_insert_with(|| (key, Vec::new()))
                    .1
                    .push(trace);
            }
            Err(_) => skipped_unmatched += 1,
        }
    }

    // resolve probe groups globally (split parts live under other keys)
    let mut groups: BTreeMap<String, ProbeGroup> = BTreeMap::new();
    for trace in traces {
        if let ConfigRole::Probe { group, kind } = &trace.invocation.role {
            let entry = groups.entry(group.clone()).or_insert_with(|| ProbeGroup {
                whole: None,
                parts: BTreeMap::new(),
                split: matches!(kind, ProbeKind::SplitWhole | ProbeKind::SplitPart { .. }),
            });
            match kind {
                ProbeKind::ParallelWhole | ProbeKind::SplitWhole => entry.whole = Some(trace),
                ProbeKind::ParallelPart { index, .. } => {
                    entry.parts.insert(*index, trace);
                }
                ProbeKind::SplitPart { index } => {
                    entry.parts.insert(*index, trace);
                }
            }
        }
    }
    // outcome per group, attached to the whole trace's key
    let mut parallel_outcomes: BTreeMap<String, Vec<bool>> = BTreeMap::new();
    let mut split_outcomes: BTreeMap<String, Vec<bool>> = BTreeMap::new();
    for group in groups.values() {
        let Some(whole) = group.whole else { continue };
        let Ok(parsed) = match_invocation(syntax, &whole.invocation.argv) else {
            continue;
        };
        let rendered = InvocationKey::from_parsed(&parsed).render();
        let parts: Vec<&ExecutionTrace> = group.parts.values().copied().collect();
        if let Some(outcome) = concat_outcome(whole, &parts) {
            if group.split {
                split_outcomes.entry(rendered).or_default().push(outcome);
            } else {
                parallel_outcomes.entry(rendered).or_default().push(outcome);
            }
        }
    }

    let mut clauses = BTreeMap::new();
    for (rendered, (key, key_traces)) in by_key {
        let observable: Vec<&ExecutionTrace> = key_traces
            .iter()
            .copied()
            .filter(|t| t.exit_status.observable())
            .collect();
        let sweeps: Vec<&ExecutionTrace> = observable
            .iter()
            .copied()
            .filter(|t| t.invocation.role == ConfigRole::Sweep)
            .collect();

        if observable.is_empty() {
            clauses.insert(
                rendered,
                KeyEntry {
                    key,
                    clauses: Vec::new(),
                    parallelizability: None,
                    splittable: None,
                    nondeterministic: false,
                    undetermined: true,
                },
            );
            continue;
        }

        // nondeterminism: repeats compared against their sweep twins
        let mut twins: BTreeMap<String, &ExecutionTrace> = BTreeMap::new();
        for trace in &sweeps {
            let inv = &trace.invocation;
            twins.insert(twin_token(inv), trace);
        }
        let mut nondeterministic = false;
        for trace in &observable {
            if trace.invocation.role != ConfigRole::Repeat {
                continue;
            }
            if let Some(original) = twins.get(&twin_token(&trace.invocation)) {
                if original.exit_status != trace.exit_status
                    || original.stdout_bytes != trace.stdout_bytes
                    || original.stderr_bytes != trace.stderr_bytes
                    || original.fs_diff != trace.fs_diff
                {
                    nondeterministic = true;
                }
            }
        }

        // parallelizability: side effects dominate; probe outcomes
        // decide stateless vs pure
        let side_effectful = observable.iter().any(|t| is_side_effectful_trace(t));
        let parallelizability = if side_effectful {
            Some(ParallelClass::SideEffectful)
        } else {
            match parallel_outcomes.get(&rendered) {
                Some(outcomes) if !outcomes.is_empty() => {
                    if outcomes.iter().all(|&b| b) && !nondeterministic {
                        Some(ParallelClass::Stateless)
                    } else {
                        Some(ParallelClass::Pure)
                    }
                }
                _ => None,
            }
        };
        let splittable = match split_outcomes.get(&rendered) {
            Some(outcomes) if !outcomes.is_empty() => {
                Some(outcomes.iter().all(|&b| b) && !nondeterministic)
            }
            _ => None,
        };

        let mut clause_list = derive_conditions(&sweeps);
        for clause in &mut clause_list {
            clause.parallelizability = parallelizability;
        }
        clauses.insert(
            rendered,
            KeyEntry {
                key,
                clauses: clause_list,
                parallelizability,
                splittable,
                nondeterministic,
                undetermined: false,
            },
        );
    }

    Ok(CommandSpec {
        command_name: syntax.command_name.clone(),
        syntax: syntax.clone(),
        clauses,
        provenance: Provenance {
            archive_digest: archive_digest(traces),
            trace_count: traces.len(),
            skipped_unmatched,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            limits: limits.clone(),
        },
    })
}

/// Identity of a config up to role: repeats pair with their originals.
fn twin_token(inv: &InvocationConfig) -> String {
    format!(
        "{:?}|{:?}|{:?}|{:?}",
        inv.argv,
        inv.env.descriptor(),
        inv.stdin.as_ref().map(|s| s.descriptor()),
        inv.slot_contents
            .iter()
            .map(|(k, v)| (k.clone(), v.descriptor()))
            .collect::<Vec<_>>()
    )
}

// ---------------------------------------------------------------------
// `.cmdspec.json` I/O
// ---------------------------------------------------------------------

pub fn spec_to_json(spec: &CommandSpec) -> String {
    let mut text = serde_json::to_string_pretty(spec).expect("spec serializes");
    text.push('\n');
    text
}

pub fn write_command_spec(path: &Path, spec: &CommandSpec) -> std::io::Result<()> {
    std::fs::write(path, spec_to_json(spec))
}

pub fn read_command_spec(path: &Path) -> std::io::Result<CommandSpec> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(std::io::Error::other)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::{ChangeKind, FsDiffEntry, SyscallRecord};

    fn record(
        name: &str,
        fd: Option<i64>,
        path: Option<&str>,
        class: SyscallClass,
        ret: i64,
    ) -> SyscallRecord {
        let mut args = Vec::new();
        if let Some(fd) = fd {
            args.push(fd.to_string());
        }
        if let Some(p) = path {
            args.push(format!("{p:?}"));
        }
        SyscallRecord {
            name: name.into(),
            args,
            return_value: ret,
            classification: class,
            touched_path: path.map(|p| p.to_string()),
        }
    }

    fn trace(
        argv: &[&str],
        slots: &[(&str, PointerKind)],
        code: i32,
        syscalls: Vec<SyscallRecord>,
        fs_diff: Vec<FsDiffEntry>,
        stdout: &[u8],
        stdin: Option<ContentSample>,
    ) -> ExecutionTrace {
        let mut env_slots = BTreeMap::new();
        let mut path_slots = Vec::new();
        for (slot, pointer) in slots {
            env_slots.insert(
                slot.to_string(),
                PathState {
                    path_kind: PathKind::Relative,
                    pointer: *pointer,
                },
            );
            let idx = argv
                .iter()
                .position(|a| *a == *slot || a.starts_with(&format!("{slot}/")))
                .expect("slot token in argv");
            path_slots.push((idx, slot.to_string()));
        }
        let config = InvocationConfig::new(
            argv.iter().map(|s| s.to_string()).collect(),
            FsState { slots: env_slots },
            stdin,
            path_slots,
            ConfigRole::Sweep,
        );
        ExecutionTrace {
            config_id: config.config_id.clone(),
            exit_status: ExitStatus::Exited { code },
            syscalls,
            fs_diff,
            stdout_bytes: stdout.to_vec(),
            stderr_bytes: Vec::new(),
            duration_ms: 1,
            truncated: false,
            error: None,
            invocation: config,
        }
    }

    fn text_sample() -> ContentSample {
        content::default_sample(ContentKind::Text)
    }

    #[test]
    fn cat_io_is_stdin_to_stdout() {
        // [PAPER] §6.1: cat has stdin as input and stdout as output.
        let t = trace(
            &["cat"],
            &[],
            0,
            vec![
                record("read", Some(0), None, SyscallClass::Read, 64),
                record("write", Some(1), None, SyscallClass::Write, 64),
            ],
            vec![],
            b"out",
            Some(text_sample()),
        );
        let (inputs, outputs) = derive_io(&t);
        assert_eq!(inputs, BTreeSet::from([IoEntity::Stdin]));
        assert_eq!(outputs, BTreeSet::from([IoEntity::Stdout]));
    }

    #[test]
    fn grep_io_is_file_to_stdout() {
        // [PAPER] §6.1: grep "foo" f1 has the file f1 as input.
        let t = trace(
            &["grep", "foo", "p0"],
            &[("p0", PointerKind::File)],
            0,
            vec![
                record("openat", None, Some("p0"), SyscallClass::Read, 3),
                record("write", Some(1), None, SyscallClass::Write, 10),
            ],
            vec![],
            b"foo line\n",
            None,
        );
        let (inputs, outputs) = derive_io(&t);
        assert_eq!(inputs, BTreeSet::from([IoEntity::Slot("p0".into())]));
        assert_eq!(outputs, BTreeSet::from([IoEntity::Stdout]));
    }

    #[test]
    fn no_tracked_io_yields_empty_sets() {
        // [TRIVIAL] true: no I/O syscalls on tracked paths.
        let t = trace(&["true"], &[], 0, vec![], vec![], b"", None);
        let (inputs, outputs) = derive_io(&t);
        assert!(inputs.is_empty());
        assert!(outputs.is_empty());
    }

    #[test]
    fn unlink_is_not_an_output() {
        // [PAPER] Fig. 3: rm has I({$1}) and O({}); the unlink shows up
        // in the postcondition, never the output set.
        let t = trace(
            &["rm", "p0"],
            &[("p0", PointerKind::File)],
            0,
            vec![
                record("newfstatat", None, Some("p0"), SyscallClass::Read, 0),
                record("unlinkat", None, Some("p0"), SyscallClass::Write, 0),
            ],
            vec![FsDiffEntry {
                path: "p0".into(),
                change: ChangeKind::FileRemoved,
            }],
            b"",
            None,
        );
        let (inputs, outputs) = derive_io(&t);
        assert_eq!(inputs, BTreeSet::from([IoEntity::Slot("p0".into())]));
        assert!(outputs.is_empty());
    }

    #[test]
    fn cwd_dependence_is_a_getcwd_record() {
        // [PAPER]/[DERIVED]/[TRIVIAL] pwd → true; echo → false; empty → false.
        let pwd = trace(
            &["pwd"],
            &[],
            0,
            vec![record("getcwd", None, None, SyscallClass::Probe, 20)],
            vec![],
            b"/scratch\n",
            None,
        );
        assert!(check_cwd_dependence(&pwd));
        let echo = trace(
            &["echo", "hi"],
            &[],
            0,
            vec![record("write", Some(1), None, SyscallClass::Write, 3)],
            vec![],
            b"hi\n",
            None,
        );
        assert!(!check_cwd_dependence(&echo));
        let empty = trace(&["x"], &[], 0, vec![], vec![], b"", None);
        assert!(!check_cwd_dependence(&empty));
    }

    #[test]
    fn filtering_requires_strictly_smaller_outputs() {
        // [PAPER] grep filters; [TRIVIAL] cat fails on equality.
        let input = text_sample();
        let smaller = vec![b'x'; input.payload.len() - 10];
        let grep_like = trace(
            &["grep", "foo"],
            &[],
            0,
            vec![
                record("read", Some(0), None, SyscallClass::Read, 64),
                record("write", Some(1), None, SyscallClass::Write, 10),
            ],
            vec![],
            &smaller,
            Some(input.clone()),
        );
        let result = check_filtering(&grep_like);
        assert!(result.monotone_decreasing && !result.vacuous);

        let equal = input.payload.clone();
        let cat_like = trace(
            &["cat"],
            &[],
            0,
            vec![
                record("read", Some(0), None, SyscallClass::Read, 64),
                record("write", Some(1), None, SyscallClass::Write, 64),
            ],
            vec![],
            &equal,
            Some(input),
        );
        let result = check_filtering(&cat_like);
        assert!(!result.monotone_decreasing && !result.vacuous);
    }

    #[test]
    fn filtering_with_no_outputs_is_vacuous() {
        // [TRIVIAL] empty quantifier domain.
        let t = trace(&["true"], &[], 0, vec![], vec![], b"", None);
        let result = check_filtering(&t);
        assert!(result.monotone_decreasing && result.vacuous);
    }

    fn rm_success(pointer: PointerKind, flags: &[&str]) -> ExecutionTrace {
        let mut argv = vec!["rm"];
        argv.extend(flags);
        argv.push("p0");
        let mut diff = vec![];
        match pointer {
            PointerKind::File => diff.push(FsDiffEntry {
                path: "p0".into(),
                change: ChangeKind::FileRemoved,
            }),
            PointerKind::DirEmpty => diff.push(FsDiffEntry {
                path: "p0".into(),
                change: ChangeKind::DirectoryRemoved,
            }),
            PointerKind::DirOneChild => {
                diff.push(FsDiffEntry {
                    path: "p0".into(),
                    change: ChangeKind::DirectoryRemoved,
                });
                diff.push(FsDiffEntry {
                    path: "p0/c0".into(),
                    change: ChangeKind::FileRemoved,
                });
            }
            _ => {}
        }
        let unlink = record("unlinkat", None, Some("p0"), SyscallClass::Write, 0);
        let probe = record("newfstatat", None, Some("p0"), SyscallClass::Read, 0);
        let syscalls = if diff.is_empty() {
            vec![record("newfstatat", None, Some("p0"), SyscallClass::Read, -2)]
        } else {
            vec![probe, unlink]
        };
        trace(&argv, &[("p0", pointer)], 0, syscalls, diff, b"", None)
    }

    fn rm_failure(pointer: PointerKind) -> ExecutionTrace {
        trace(
            &["rm", "p0"],
            &[("p0", pointer)],
            1,
            vec![record("newfstatat", None, Some("p0"), SyscallClass::Read, -2)],
            vec![],
            b"",
            None,
        )
    }

    #[test]
    fn flagless_rm_clauses_match_the_golden_shape() {
        // [PAPER] Fig. 3: flags({}) ∧ arg($1, p.FD) → exit(0) ∧ ¬∃$1;
        // failing pointer states merge into one unchanged clause.
        let file_ok = rm_success(PointerKind::File, &[]);
        let fails = [
            rm_failure(PointerKind::DirEmpty),
            rm_failure(PointerKind::DirOneChild),
            rm_failure(PointerKind::Nonexistent),
            rm_failure(PointerKind::ParentNonexistent),
        ];
        let mut refs: Vec<&ExecutionTrace> = vec![&file_ok];
        refs.extend(fails.iter());
        let clauses = derive_conditions(&refs);
        assert_eq!(clauses.len(), 2, "{clauses:#?}");

        let success = clauses.iter().find(|c| c.exit_class == ExitClass::Zero).unwrap();
        assert_eq!(success.preconditions["p0"], BTreeSet::from(["file".to_string()]));
        assert_eq!(success.postconditions["p0"], SlotPost::Absent);

        let failure = clauses
            .iter()
            .find(|c| c.exit_class == ExitClass::Nonzero)
            .unwrap();
        assert_eq!(failure.postconditions["p0"], SlotPost::Unchanged);
        assert_eq!(
            failure.preconditions["p0"],
            BTreeSet::from([
                "dir_empty".to_string(),
                "dir_one_child".to_string(),
                "nonexistent".to_string(),
                "parent_nonexistent".to_string(),
            ])
        );
        assert_eq!(failure.merged_environments, 4);
    }

    #[test]
    fn rm_rf_merges_all_pointer_states_into_absent() {
        // [PAPER] Fig. 3: p.FD ∨ p.DIR ∨ p.ε all end with ¬∃$1, exit(0).
        let traces = [
            rm_success(PointerKind::File, &["-r", "-f"]),
            rm_success(PointerKind::DirEmpty, &["-r", "-f"]),
            rm_success(PointerKind::DirOneChild, &["-r", "-f"]),
            rm_success(PointerKind::Nonexistent, &["-r", "-f"]),
        ];
        let refs: Vec<&ExecutionTrace> = traces.iter().collect();
        let clauses = derive_conditions(&refs);
        assert_eq!(clauses.len(), 1, "{clauses:#?}");
        let clause = &clauses[0];
        assert_eq!(clause.exit_class, ExitClass::Zero);
        assert_eq!(clause.postconditions["p0"], SlotPost::Absent);
        assert_eq!(clause.preconditions["p0"].len(), 4);
        assert_eq!(clause.merged_environments, 4);
    }

    #[test]
    fn fs_silent_command_has_exit_only_clause() {
        // [TRIVIAL] clause with empty postcondition diff.
        let t = trace(&["true"], &[], 0, vec![], vec![], b"", None);
        let clauses = derive_conditions(&[&t]);
        assert_eq!(clauses.len(), 1);
        assert!(clauses[0].postconditions.is_empty());
        assert_eq!(clauses[0].exit_class, ExitClass::Zero);
    }

    #[test]
    fn side_effect_rule_follows_trace_evidence() {
        // [DERIVED] rm mutates (diff + write-class path call) → true;
        // pwd consults the cwd → true; sha-like stdout writer → false.
        assert!(is_side_effectful_trace(&rm_success(PointerKind::File, &[])));
        let pwd = trace(
            &["pwd"],
            &[],
            0,
            vec![record("getcwd", None, None, SyscallClass::Probe, 20)],
            vec![],
            b"/scratch\n",
            None,
        );
        assert!(is_side_effectful_trace(&pwd));
        let hasher = trace(
            &["sha256sum"],
            &[],
            0,
            vec![
                record("read", Some(0), None, SyscallClass::Read, 64),
                record("write", Some(1), None, SyscallClass::Write, 65),
            ],
            vec![],
            b"abc -\n",
            Some(text_sample()),
        );
        assert!(!is_side_effectful_trace(&hasher));
    }

    #[test]
    fn concat_outcome_matches_bytewise_comparison() {
        // [DERIVED] oracle: outputs compared by explicit concatenation.
        let whole = trace(&["cat"], &[], 0, vec![], vec![], b"a\nb\nc\n", Some(text_sample()));
        let p1 = trace(&["cat"], &[], 0, vec![], vec![], b"a\nb\n", None);
        let p2 = trace(&["cat"], &[], 0, vec![], vec![], b"c\n", None);
        assert_eq!(concat_outcome(&whole, &[&p1, &p2]), Some(true));
        let p2_bad = trace(&["cat"], &[], 0, vec![], vec![], b"z\n", None);
        assert_eq!(concat_outcome(&whole, &[&p1, &p2_bad]), Some(false));
        let p2_fail = trace(&["cat"], &[], 1, vec![], vec![], b"c\n", None);
        assert_eq!(concat_outcome(&whole, &[&p1, &p2_fail]), Some(false));
    }

    #[test]
    fn empty_archive_is_an_error() {
        // [TRIVIAL]
        let syntax = crate::syntax::rm_exemplar();
        assert!(matches!(
            assemble_spec(&syntax, &[], &GenerationLimits::default()),
            Err(DeriveError::EmptyArchive)
        ));
    }

    #[test]
    fn errored_keys_are_marked_undetermined() {
        // [TRIVIAL] degenerate data: a key with only errored traces.
        let syntax = crate::syntax::rm_exemplar();
        let mut t = rm_success(PointerKind::File, &[]);
        t.exit_status = ExitStatus::SandboxFailure {
            message: "boom".into(),
        };
        let spec = assemble_spec(&syntax, &[t], &GenerationLimits::default()).unwrap();
        let entry = spec.clauses.values().next().unwrap();
        assert!(entry.undetermined);
        assert!(entry.clauses.is_empty());
    }

    #[test]
    fn derivation_is_deterministic_bytewise() {
        // [DERIVED] same archive → byte-identical JSON.
        let syntax = crate::syntax::rm_exemplar();
        let traces = vec![
            rm_success(PointerKind::File, &[]),
            rm_failure(PointerKind::DirEmpty),
            rm_success(PointerKind::File, &["-r", "-f"]),
            rm_success(PointerKind::Nonexistent, &["-r", "-f"]),
        ];
        let limits = GenerationLimits::default();
        let a = spec_to_json(&assemble_spec(&syntax, &traces, &limits).unwrap());
        let b = spec_to_json(&assemble_spec(&syntax, &traces, &limits).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn merge_monotonicity_never_drops_behavior() {
        // [DERIVED] superset archives keep every observed (exit,
        // postcondition) behavior of the subset derivation.
        let syntax = crate::syntax::rm_exemplar();
        let limits = GenerationLimits::default();
        let subset = vec![rm_success(PointerKind::File, &[])];
        let mut superset = subset.clone();
        superset.push(rm_failure(PointerKind::DirEmpty));
        superset.push(rm_failure(PointerKind::Nonexistent));

        let small = assemble_spec(&syntax, &subset, &limits).unwrap();
        let large = assemble_spec(&syntax, &superset, &limits).unwrap();
        for (key, entry) in &small.clauses {
            let large_entry = &large.clauses[key];
            for clause in &entry.clauses {
                let preserved = large_entry.clauses.iter().any(|c| {
                    c.exit_class == clause.exit_class
                        && c.postconditions == clause.postconditions
                        && clause.preconditions.iter().all(|(slot, kinds)| {
                            kinds.is_subset(&c.preconditions[slot])
                        })
                });
                assert!(preserved, "behavior dropped for {key}: {clause:#?}");
            }
        }
    }

    #[test]
    fn invocation_keys_abstract_values_not_shapes() {
        // [TRIVIAL] key invariant: concrete paths share a key; different
        // flag sets or arities do not.
        let syntax = crate::syntax::rm_exemplar();
        let key_of = |argv: &[&str]| {
            let argv: Vec<String> = argv.iter().map(|s| s.to_string()).collect();
            InvocationKey::from_parsed(&match_invocation(&syntax, &argv).unwrap()).render()
        };
        assert_eq!(key_of(&["rm", "p0"]), key_of(&["rm", "another_name"]));
        assert_ne!(key_of(&["rm", "p0"]), key_of(&["rm", "-f", "p0"]));
        assert_ne!(key_of(&["rm", "p0"]), key_of(&["rm", "p0", "p1"]));
        assert_eq!(
            key_of(&["rm", "-r", "-f", "p0"]),
            key_of(&["rm", "-f", "-r", "p0"])
        );
    }

    #[test]
    fn followup_plan_covers_repeats_probes_and_splits() {
        // [DERIVED] plan inspection for a two-path sweep config.
        let syntax = crate::syntax::rm_exemplar();
        let sweep = vec![InvocationConfig::new(
            vec!["rm".into(), "p0".into(), "p1".into()],
            file_env(&["p0", "p1"]),
            None,
            vec![(1, "p0".into()), (2, "p1".into())],
            ConfigRole::Sweep,
        )];
        let plan = plan_followups(&syntax, &sweep);
        assert!(plan.iter().any(|c| c.role == ConfigRole::Repeat));
        let split_whole = plan
            .iter()
            .find(|c| matches!(&c.role, ConfigRole::Probe { kind: ProbeKind::SplitWhole, .. }))
            .expect("split whole probe");
        assert_eq!(split_whole.slot_contents.len(), 2);
        let split_parts: Vec<_> = plan
            .iter()
            .filter(|c| {
                matches!(&c.role, ConfigRole::Probe { kind: ProbeKind::SplitPart { .. }, .. })
            })
            .collect();
        assert_eq!(split_parts.len(), 2);
        assert_eq!(split_parts[0].argv, vec!["rm", "p0"]);
        // partition payloads concatenate to the full text
        let text = text_sample().payload;
        let mut joined = Vec::new();
        for part in &split_parts {
            joined.extend_from_slice(&part.slot_contents["p0"].payload);
        }
        assert_eq!(joined, text);
    }
}
