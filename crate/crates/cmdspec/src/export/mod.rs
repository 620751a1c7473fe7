//! Exporters: translate the universal [`CommandSpec`] into the four
//! downstream consumer formats.
//!
//! Each target is defined by a *projection* type — the subset of the
//! spec visible in that target's vocabulary — plus a renderer and an
//! importer. Exporting serializes the projection; re-importing an
//! exported document yields the projection back, byte-for-byte in
//! content (the round-trip invariant). No exporter emits a field that
//! does not trace to a `CommandSpec` field.
//!
//! * **pash** — JSON per-invocation records: input/output entities and
//!   a parallelizability class (`stateless` / `pure` / `side-effectful`
//!   / `unknown` when the probes were inconclusive; never guessed).
//! * **posh** — YAML per-invocation records: `splittable`,
//!   `filters_input`, and `location_dependent` booleans.
//! * **shellcheck** — instantiated check source text (a data artifact):
//!   argument-misuse checks from the syntax arity and
//!   destructive-argument warnings from deletion postconditions.
//! * **shseer** — JSON (precondition, postcondition, exit) triples, one
//!   per condition clause, in the path-state vocabulary.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derive::{CommandSpec, ExitClass, KeyEntry, ParallelClass, SlotPost};
use crate::syntax::{Arity, SyntaxSpec};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("malformed {target} document: {message}")]
    Malformed { target: &'static str, message: String },
}

fn malformed(target: &'static str, message: impl Into<String>) -> ExportError {
    ExportError::Malformed {
        target,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportTarget {
    Pash,
    Posh,
    Shellcheck,
    Shseer,
}

impl ExportTarget {
    pub const ALL: [ExportTarget; 4] = [
        ExportTarget::Pash,
        ExportTarget::Posh,
        ExportTarget::Shellcheck,
        ExportTarget::Shseer,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExportTarget::Pash => "pash",
            ExportTarget::Posh => "posh",
            ExportTarget::Shellcheck => "shellcheck",
            ExportTarget::Shseer => "shseer",
        }
    }

    pub fn extension(&self) -> &'static str {
        match self {
            ExportTarget::Pash | ExportTarget::Shseer => "json",
            ExportTarget::Posh => "yaml",
            ExportTarget::Shellcheck => "txt",
        }
    }
}

/// Renders one target to its document text.
pub fn export(spec: &CommandSpec, target: ExportTarget) -> String {
    match target {
        ExportTarget::Pash => export_pash(spec),
        ExportTarget::Posh => export_posh(spec),
        ExportTarget::Shellcheck => export_shellcheck(spec),
        ExportTarget::Shseer => export_shseer(spec),
    }
}

fn class_str(class: Option<ParallelClass>) -> &'static str {
    match class {
        Some(ParallelClass::Stateless) => "stateless",
        Some(ParallelClass::Pure) => "pure",
        Some(ParallelClass::SideEffectful) => "side-effectful",
        None => "unknown",
    }
}

fn slot_post_str(post: SlotPost) -> &'static str {
    match post {
        SlotPost::Unchanged => "unchanged",
        SlotPost::File => "file",
        SlotPost::Dir => "dir",
        SlotPost::Absent => "absent",
    }
}

// ---------------------------------------------------------------------
// pash: JSON, I/O sets + parallelizability class
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PashDoc {
    pub format: String,
    pub command: String,
    pub invocations: Vec<PashRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PashRecord {
    pub invocation: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// stateless | pure | side-effectful | unknown
    pub class: String,
    pub undetermined: bool,
}

pub fn project_pash(spec: &CommandSpec) -> PashDoc {
    let invocations = spec
        .clauses
        .iter()
        .map(|(rendered, entry)| {
            let mut inputs = std::collections::BTreeSet::new();
            let mut outputs = std::collections::BTreeSet::new();
            for clause in &entry.clauses {
                inputs.extend(clause.inputs.iter().map(|e| e.to_string()));
                outputs.extend(clause.outputs.iter().map(|e| e.to_string()));
            }
            PashRecord {
                invocation: rendered.clone(),
                inputs: inputs.into_iter().collect(),
                outputs: outputs.into_iter().collect(),
                class: class_str(entry.parallelizability).to_string(),
                undetermined: entry.undetermined,
            }
        })
        .collect();
    PashDoc {
        format: "pash-annotations-v1".to_string(),
        command: spec.command_name.clone(),
        invocations,
    }
}

pub fn export_pash(spec: &CommandSpec) -> String {
    let mut text = serde_json::to_string_pretty(&project_pash(spec)).expect("pash serializes");
    text.push('\n');
    text
}

pub fn import_pash(text: &str) -> Result<PashDoc, ExportError> {
    serde_json::from_str(text).map_err(|e| malformed("pash", e.to_string()))
}

// ---------------------------------------------------------------------
// posh: YAML, splittable / filters_input / location_dependent
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoshDoc {
    pub format: String,
    pub command: String,
    pub invocations: Vec<PoshRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoshRecord {
    pub invocation: String,
    /// None when no splittability probes ran for this invocation.
    pub splittable: Option<bool>,
    pub filters_input: bool,
    pub location_dependent: bool,
}

fn filters_input(entry: &KeyEntry) -> bool {
    // true only when the property was measured (not vacuous) and held
    // in every measured clause
    let measured: Vec<_> = entry
        .clauses
        .iter()
        .filter(|c| !c.monotone_vacuous)
        .collect();
    !measured.is_empty() && measured.iter().all(|c| c.monotone_decreasing)
}

pub fn project_posh(spec: &CommandSpec) -> PoshDoc {
    let invocations = spec
        .clauses
        .iter()
        .map(|(rendered, entry)| PoshRecord {
            invocation: rendered.clone(),
            splittable: entry.splittable,
            filters_input: filters_input(entry),
            location_dependent: entry.clauses.iter().any(|c| c.cwd_dependent),
        })
        .collect();
    PoshDoc {
        format: "posh-annotations-v1".to_string(),
        command: spec.command_name.clone(),
        invocations,
    }
}

pub fn export_posh(spec: &CommandSpec) -> String {
    serde_yaml::to_string(&project_posh(spec)).expect("posh serializes")
}

pub fn import_posh(text: &str) -> Result<PoshDoc, ExportError> {
    serde_yaml::from_str(text).map_err(|e| malformed("posh", e.to_string()))
}

// ---------------------------------------------------------------------
// shellcheck: instantiated check source text
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShellcheckDoc {
    pub command: String,
    pub checks: Vec<ShellcheckCheck>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShellcheckCheck {
    pub name: String,
    /// key → value, rendered as `key = "value"` lines in the block.
    pub fields: BTreeMap<String, String>,
}

/// Minimum number of positional arguments any usage of the command
/// accepts; the argument-misuse check fires below this count.
fn min_mandatory_args(syntax: &SyntaxSpec) -> usize {
    syntax
        .usages
        .iter()
        .map(|usage| {
            usage
                .positions
                .iter()
                .flat_map(|p| p.args.iter())
                .filter(|a| a.kind == crate::syntax::ArgKind::Positional)
                .map(|a| match a.arity {
                    Arity::Exactly(n) => n as usize,
                    Arity::OnePlus => 1,
                    Arity::ZeroOne | Arity::ZeroPlus => 0,
                })
                .sum::<usize>()
        })
        .min()
        .unwrap_or(0)
}

pub fn project_shellcheck(spec: &CommandSpec) -> ShellcheckDoc {
    let mut checks = Vec::new();
    let command = &spec.command_name;

    // argument-misuse family: mandatory arity from the syntax spec
    let min_args = min_mandatory_args(&spec.syntax);
    if min_args >= 1 {
        let mut fields = BTreeMap::new();
        fields.insert("command".into(), command.clone());
        fields.insert("min_args".into(), min_args.to_string());
        fields.insert("severity".into(), "error".into());
        fields.insert(
            "message".into(),
            format!("{command} requires at least {min_args} positional argument(s)"),
        );
        checks.push(ShellcheckCheck {
            name: format!("{command}-mandatory-arguments"),
            fields,
        });
    }

    // destructive-argument family: successful clauses whose
    // postcondition removes a path that existed beforehand
    for (rendered, entry) in &spec.clauses {
        let mut destructive_slots = std::collections::BTreeSet::new();
        for clause in &entry.clauses {
            if clause.exit_class != ExitClass::Zero {
                continue;
            }
            for (slot, post) in &clause.postconditions {
                let existed = clause.preconditions.get(slot).is_some_and(|kinds| {
                    kinds
                        .iter()
                        .any(|k| matches!(k.as_str(), "file" | "dir_empty" | "dir_one_child"))
                });
                if *post == SlotPost::Absent && existed {
                    destructive_slots.insert(slot.clone());
                }
            }
        }
        for slot in destructive_slots {
            let mut fields = BTreeMap::new();
            fields.insert("command".into(), command.clone());
            fields.insert("invocation".into(), rendered.clone());
            fields.insert("slot".into(), slot.clone());
            fields.insert("severity".into(), "warning".into());
            fields.insert(
                "message".into(),
                format!(
                    "{command} removes the path passed as {slot}; a mistyped argument is destructive"
                ),
            );
            checks.push(ShellcheckCheck {
                name: format!("{command}-destructive-argument"),
                fields,
            });
        }
    }

    ShellcheckDoc {
        command: command.clone(),
        checks,
    }
}

pub fn export_shellcheck(spec: &CommandSpec) -> String {
    let doc = project_shellcheck(spec);
    let mut out = String::new();
    out.push_str(&format!("# instantiated checks for \"{}\"\n", doc.command));
    out.push_str("# generated from a mined command specification\n");
    for check in &doc.checks {
        out.push('\n');
        out.push_str(&format!("check \"{}\" {{\n", check.name));
        for (key, value) in &check.fields {
            out.push_str(&format!("  {key} = {value:?}\n"));
        }
        out.push_str("}\n");
    }
    out
}

pub fn import_shellcheck(text: &str) -> Result<ShellcheckDoc, ExportError> {
    let mut command = None;
    let mut checks = Vec::new();
    let mut current: Option<ShellcheckCheck> = None;
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("# instantiated checks for ") {
            command = serde_json::from_str::<String>(rest).ok();
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("check ") {
            let name_part = rest
                .strip_suffix('{')
                .ok_or_else(|| malformed("shellcheck", format!("line {}: missing '{{'", lineno + 1)))?
                .trim();
            let name: String = serde_json::from_str(name_part)
                .map_err(|e| malformed("shellcheck", format!("line {}: {e}", lineno + 1)))?;
            current = Some(ShellcheckCheck {
                name,
                fields: BTreeMap::new(),
            });
        } else if trimmed == "}" {
            checks.push(current.take().ok_or_else(|| {
                malformed("shellcheck", format!("line {}: unmatched '}}'", lineno + 1))
            })?);
        } else if let Some((key, value)) = trimmed.split_once(" = ") {
            let check = current.as_mut().ok_or_else(|| {
                malformed("shellcheck", format!("line {}: field outside block", lineno + 1))
            })?;
            let value: String = serde_json::from_str(value)
                .map_err(|e| malformed("shellcheck", format!("line {}: {e}", lineno + 1)))?;
            check.fields.insert(key.trim().to_string(), value);
        } else {
            return Err(malformed(
                "shellcheck",
                format!("line {}: unrecognized syntax", lineno + 1),
            ));
        }
    }
    Ok(ShellcheckDoc {
        command: command.ok_or_else(|| malformed("shellcheck", "missing command header"))?,
        checks,
    })
}

// ---------------------------------------------------------------------
// shseer: JSON (pre, post, exit) triples
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShseerDoc {
    pub format: String,
    pub command: String,
    pub triples: Vec<ShseerTriple>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShseerTriple {
    pub invocation: String,
    /// slot → disjunction of initial path states.
    pub pre: BTreeMap<String, Vec<String>>,
    /// slot → final path state; empty for effect-free clauses.
    pub post: BTreeMap<String, String>,
    /// "zero" or "nonzero".
    pub exit: String,
    pub exit_codes: Vec<i32>,
}

pub fn project_shseer(spec: &CommandSpec) -> ShseerDoc {
    let mut triples = Vec::new();
    for (rendered, entry) in &spec.clauses {
        for clause in &entry.clauses {
            triples.push(ShseerTriple {
                invocation: rendered.clone(),
                pre: clause
                    .preconditions
                    .iter()
                    .map(|(slot, kinds)| (slot.clone(), kinds.iter().cloned().collect()))
                    .collect(),
                post: clause
                    .postconditions
                    .iter()
                    .filter(|(_, post)| **post != SlotPost::Unchanged)
                    .map(|(slot, post)| (slot.clone(), slot_post_str(*post).to_string()))
                    .collect(),
                exit: match clause.exit_class {
                    ExitClass::Zero => "zero".to_string(),
                    ExitClass::Nonzero => "nonzero".to_string(),
                },
                exit_codes: clause.exit_codes.iter().copied().collect(),
            });
        }
    }
    ShseerDoc {
        format: "shseer-conditions-v1".to_string(),
        command: spec.command_name.clone(),
        triples,
    }
}

pub fn export_shseer(spec: &CommandSpec) -> String {
    let mut text = serde_json::to_string_pretty(&project_shseer(spec)).expect("shseer serializes");
    text.push('\n');
    text
}

pub fn import_shseer(text: &str) -> Result<ShseerDoc, ExportError> {
    serde_json::from_str(text).map_err(|e| malformed("shseer", e.to_string()))
}
