//! Syntax specification model: a typed grammar describing every
//! syntactically valid way to invoke a command.
//!
//! A [`SyntaxSpec`] holds an ordered list of usages; each usage is an
//! ordered list of positions; each position is an unordered set of
//! arguments (flags, options, or positionals). The on-disk form is a
//! canonical JSON document (`.synspec.json`) with sorted keys and
//! arguments sorted by primary name, so serializing the same spec twice
//! is byte-identical.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound for `exactly(n)` arities, keeping generation bounded.
pub const MAX_EXACT_ARITY: u32 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntaxSpec {
    #[serde(rename = "command")]
    pub command_name: String,
    pub usages: Vec<Usage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Usage {
    pub positions: Vec<Position>,
}

/// A slot in the argv sequence holding an unordered set of arguments.
///
/// The arg list is kept sorted by (kind, primary name) so that equality
/// and serialization are insensitive to the order args were supplied in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position {
    pub args: Vec<Arg>,
}

impl Position {
    pub fn new(mut args: Vec<Arg>) -> Self {
        args.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        Position { args }
    }

    /// Restore the canonical arg ordering after deserialization.
    fn canonicalize(&mut self) {
        self.args.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArgKind {
    Flag,
    Option,
    Positional,
}

impl fmt::Display for ArgKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgKind::Flag => write!(f, "flag"),
            ArgKind::Option => write!(f, "option"),
            ArgKind::Positional => write!(f, "positional"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arg {
    pub kind: ArgKind,
    /// Primary name, e.g. `-r` or `--force`. Empty for positionals.
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub aliases: BTreeSet<String>,
    pub arity: Arity,
    /// Value type; absent for flags, present for options and positionals.
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub value_type: Option<ArgType>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flag_followed_by_equals: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub dash_as_stdin: bool,
    #[serde(default, skip_serializing_if = "Repetition::is_default")]
    pub max_repetition: Repetition,
}

impl Arg {
    pub fn flag(name: &str) -> Self {
        Arg {
            kind: ArgKind::Flag,
            name: name.to_string(),
            aliases: BTreeSet::new(),
            arity: Arity::ZeroOne,
            value_type: None,
            flag_followed_by_equals: false,
            dash_as_stdin: false,
            max_repetition: Repetition::default(),
        }
    }

    pub fn option(name: &str, value_type: ArgType) -> Self {
        Arg {
            kind: ArgKind::Option,
            name: name.to_string(),
            aliases: BTreeSet::new(),
            arity: Arity::ZeroOne,
            value_type: Some(value_type),
            flag_followed_by_equals: false,
            dash_as_stdin: false,
            max_repetition: Repetition::default(),
        }
    }

    pub fn positional(value_type: ArgType, arity: Arity) -> Self {
        Arg {
            kind: ArgKind::Positional,
            name: String::new(),
            aliases: BTreeSet::new(),
            arity,
            value_type: Some(value_type),
            flag_followed_by_equals: false,
            dash_as_stdin: false,
            max_repetition: Repetition::default(),
        }
    }

    pub fn with_aliases<I: IntoIterator<Item = String>>(mut self, aliases: I) -> Self {
        self.aliases = aliases.into_iter().collect();
        self
    }

    /// All strings that select this argument on the command line.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.name.as_str())
            .filter(|n| !n.is_empty())
            .chain(self.aliases.iter().map(|s| s.as_str()))
    }

    fn sort_key(&self) -> (ArgKind, &str) {
        (self.kind, self.name.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arity {
    ZeroOne,
    ZeroPlus,
    OnePlus,
    Exactly(u32),
}

impl Arity {
    pub fn is_variable(&self) -> bool {
        matches!(self, Arity::ZeroPlus | Arity::OnePlus)
    }
}

/// Encoded in JSON as a positive integer or the string `"unbounded"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Repetition {
    #[default]
    Unbounded,
    Bounded(u32),
}

impl Repetition {
    fn is_default(&self) -> bool {
        matches!(self, Repetition::Unbounded)
    }
}

impl Serialize for Repetition {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Repetition::Unbounded => serializer.serialize_str("unbounded"),
            Repetition::Bounded(n) => serializer.serialize_u32(*n),
        }
    }
}

impl<'de> Deserialize<'de> for Repetition {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            Count(u32),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Word(w) if w == "unbounded" => Ok(Repetition::Unbounded),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "max_repetition must be a positive integer or \"unbounded\", got {w:?}"
            ))),
            Raw::Count(n) => Ok(Repetition::Bounded(n)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgType {
    Path,
    Selection(BTreeSet<String>),
    Integer,
    Char,
    String,
    Other,
}

impl ArgType {
    /// `other` behaves as `string` everywhere downstream; the original
    /// tag is kept for display.
    pub fn effective(&self) -> &ArgType {
        match self {
            ArgType::Other => &ArgType::String,
            t => t,
        }
    }

    pub fn is_path(&self) -> bool {
        matches!(self, ArgType::Path)
    }

    /// Display tag; selection values are not part of the name.
    pub fn type_name(&self) -> &'static str {
        match self {
            ArgType::Path => "path",
            ArgType::Selection(_) => "selection",
            ArgType::Integer => "integer",
            ArgType::Char => "char",
            ArgType::String => "string",
            ArgType::Other => "other",
        }
    }
}

/// A single broken invariant, naming the offending element and rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub element: String,
    pub rule: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.element, self.rule, self.message)
    }
}

fn violation(element: String, rule: &str, message: String) -> Violation {
    Violation {
        element,
        rule: rule.to_string(),
        message,
    }
}

/// Checks every type invariant; returns an empty list iff the spec is
/// valid. Violations are data, not failures.
pub fn validate_spec(spec: &SyntaxSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if spec.command_name.is_empty() {
        out.push(violation(
            "command".into(),
            "command-name-nonempty",
            "command name must be non-empty".into(),
        ));
    } else if spec.command_name.chars().any(char::is_whitespace) {
        out.push(violation(
            "command".into(),
            "command-name-no-whitespace",
            format!("command name {:?} contains whitespace", spec.command_name),
        ));
    }
    if spec.usages.is_empty() {
        out.push(violation(
            "usages".into(),
            "empty-usages",
            "at least one usage is required".into(),
        ));
    }
    for (ui, usage) in spec.usages.iter().enumerate() {
        for (pi, position) in usage.positions.iter().enumerate() {
            let loc = format!("usages[{ui}].positions[{pi}]");
            let mut seen: BTreeSet<&str> = BTreeSet::new();
            for (ai, arg) in position.args.iter().enumerate() {
                let aloc = format!("{loc}.args[{ai}]");
                validate_arg(arg, &aloc, &mut out);
                for name in arg.names() {
                    if !seen.insert(name) {
                        out.push(violation(
                            aloc.clone(),
                            "duplicate-name-in-position",
                            format!("name {name:?} appears more than once in this position"),
                        ));
                    }
                }
            }
        }
    }
    out
}

fn validate_arg(arg: &Arg, loc: &str, out: &mut Vec<Violation>) {
    match arg.kind {
        ArgKind::Flag => {
            if arg.value_type.is_some() {
                out.push(violation(
                    loc.to_string(),
                    "flag-has-no-type",
                    format!("flag {:?} must not carry a value type", arg.name),
                ));
            }
            if arg.name.is_empty() {
                out.push(violation(
                    loc.to_string(),
                    "named-arg-nonempty",
                    "flag must have a non-empty name".into(),
                ));
            }
        }
        ArgKind::Option => {
            if arg.value_type.is_none() {
                out.push(violation(
                    loc.to_string(),
                    "option-requires-type",
                    format!("option {:?} must carry exactly one value type", arg.name),
                ));
            }
            if arg.name.is_empty() {
                out.push(violation(
                    loc.to_string(),
                    "named-arg-nonempty",
                    "option must have a non-empty name".into(),
                ));
            }
        }
        ArgKind::Positional => {
            if arg.value_type.is_none() {
                out.push(violation(
                    loc.to_string(),
                    "positional-requires-type",
                    "positional must carry exactly one value type".into(),
                ));
            }
            if !arg.name.is_empty() {
                out.push(violation(
                    loc.to_string(),
                    "positional-unnamed",
                    format!("positional must have an empty name, got {:?}", arg.name),
                ));
            }
        }
    }
    if arg.aliases.contains(&arg.name) {
        out.push(violation(
            loc.to_string(),
            "alias-collides-with-name",
            format!("alias set repeats the primary name {:?}", arg.name),
        ));
    }
    if let Arity::Exactly(n) = arg.arity {
        if n == 0 {
            out.push(violation(
                loc.to_string(),
                "exact-arity-positive",
                "exactly(n) requires n >= 1".into(),
            ));
        } else if n > MAX_EXACT_ARITY {
            out.push(violation(
                loc.to_string(),
                "exact-arity-cap",
                format!("exactly({n}) exceeds the cap of {MAX_EXACT_ARITY}"),
            ));
        }
    }
    if let Repetition::Bounded(n) = arg.max_repetition {
        if n == 0 {
            out.push(violation(
                loc.to_string(),
                "max-repetition-positive",
                "max_repetition must be >= 1".into(),
            ));
        }
    }
    if let Some(ArgType::Selection(values)) = &arg.value_type {
        if values.is_empty() {
            out.push(violation(
                loc.to_string(),
                "selection-nonempty",
                "selection type must carry at least one allowed value".into(),
            ));
        }
    }
}

#[derive(Debug, Error)]
pub enum SyntaxError {
    #[error("spec is invalid: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Serializes a valid spec to the canonical `.synspec.json` text.
///
/// Object keys are sorted and args within a position are sorted by
/// primary name, so the output is deterministic. Rejects invalid specs.
pub fn serialize_spec(spec: &SyntaxSpec) -> Result<String, SyntaxError> {
    let violations = validate_spec(spec);
    if !violations.is_empty() {
        return Err(SyntaxError::Invalid(violations));
    }
    let mut canonical = spec.clone();
    for usage in &mut canonical.usages {
        for position in &mut usage.positions {
            position.canonicalize();
        }
    }
    // serde_json's default Map is a BTreeMap, so round-tripping through
    // Value sorts all object keys.
    let value = serde_json::to_value(&canonical).expect("spec serializes to JSON");
    let mut text = serde_json::to_string_pretty(&value).expect("value renders to text");
    text.push('\n');
    Ok(text)
}

/// Parses `.synspec.json` text into a canonical [`SyntaxSpec`].
///
/// Malformed documents, unknown arity/type keywords, and type errors are
/// reported with line/column location. The parsed spec is not validated;
/// call [`validate_spec`] separately.
pub fn parse_spec(text: &str) -> Result<SyntaxSpec, SyntaxError> {
    let mut spec: SyntaxSpec =
        serde_json::from_str(text).map_err(|e| SyntaxError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    for usage in &mut spec.usages {
        for position in &mut usage.positions {
            position.canonicalize();
        }
    }
    Ok(spec)
}

/// Parse and validate in one step, used where only valid specs make sense.
pub fn load_spec(text: &str) -> Result<SyntaxSpec, SyntaxError> {
    let spec = parse_spec(text)?;
    let violations = validate_spec(&spec);
    if violations.is_empty() {
        Ok(spec)
    } else {
        Err(SyntaxError::Invalid(violations))
    }
}

/// The `rm` spec used as a few-shot exemplar and throughout the tests:
/// one usage, a flag position with `-r` and `-f`, and a one-plus path
/// positional.
pub fn rm_exemplar() -> SyntaxSpec {
    SyntaxSpec {
        command_name: "rm".into(),
        usages: vec![Usage {
            positions: vec![
                Position::new(vec![
                    Arg::flag("-r").with_aliases(["-R".into(), "--recursive".into()]),
                    Arg::flag("-f").with_aliases(["--force".into()]),
                ]),
                Position::new(vec![Arg::positional(ArgType::Path, Arity::OnePlus)]),
            ],
        }],
    }
}

/// The `mv` few-shot exemplar: flags, then source path(s), then a
/// destination path in its own position.
pub fn mv_exemplar() -> SyntaxSpec {
    SyntaxSpec {
        command_name: "mv".into(),
        usages: vec![Usage {
            positions: vec![
                Position::new(vec![
                    Arg::flag("-f").with_aliases(["--force".into()]),
                    Arg::flag("-v").with_aliases(["--verbose".into()]),
                ]),
                Position::new(vec![Arg::positional(ArgType::Path, Arity::OnePlus)]),
                Position::new(vec![Arg::positional(ArgType::Path, Arity::Exactly(1))]),
            ],
        }],
    }
}

/// The `touch` few-shot exemplar: one option with a string value plus a
/// one-plus path positional.
pub fn touch_exemplar() -> SyntaxSpec {
    SyntaxSpec {
        command_name: "touch".into(),
        usages: vec![Usage {
            positions: vec![
                Position::new(vec![
                    Arg::flag("-a"),
                    Arg::flag("-m"),
                    Arg::option("-d", ArgType::String).with_aliases(["--date".into()]),
                ]),
                Position::new(vec![Arg::positional(ArgType::Path, Arity::OnePlus)]),
            ],
        }],
    }
}
