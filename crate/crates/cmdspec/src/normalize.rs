//! Invocation normalization and corpus coverage matching.
//!
//! Normalization rewrites a concrete argv into a canonical key under a
//! configurable rule set:
//!
//! * `flag_order` — sort flags (and options) by name; never merges
//!   invocations with different flag sets.
//! * `path` — replace path values with a type tag: behavior depends on
//!   the pointed-at state, not the name.
//! * `integer` / `string` — abstract typed values to their type tags.
//! * `arity` — collapse repeated values of a variable-arity positional
//!   to one representative.
//!
//! Coverage matching compares a corpus of invocation lines against the
//! set the tool actually tested, reporting exact matches and the
//! incremental lift of each rule applied cumulatively.

use serde::{Deserialize, Serialize};

use crate::matcher::{match_invocation, MatchError};
use crate::syntax::{ArgType, SyntaxSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    FlagOrder,
    Path,
    Integer,
    String,
    Arity,
}

impl RuleKind {
    /// Cumulative application order used by coverage reports.
    pub const LADDER: [RuleKind; 5] = [
        RuleKind::FlagOrder,
        RuleKind::Path,
        RuleKind::Integer,
        RuleKind::String,
        RuleKind::Arity,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RuleKind::FlagOrder => "flag_order",
            RuleKind::Path => "path",
            RuleKind::Integer => "integer",
            RuleKind::String => "string",
            RuleKind::Arity => "arity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationRule {
    pub kind: RuleKind,
    pub enabled: bool,
}

/// The enabled-rule set. Rules compose; an empty set is the identity
/// (up to rendering).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NormalizationRules {
    pub flag_order: bool,
    pub path: bool,
    pub integer: bool,
    pub string: bool,
    pub arity: bool,
}

impl NormalizationRules {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn all() -> Self {
        NormalizationRules {
            flag_order: true,
            path: true,
            integer: true,
            string: true,
            arity: true,
        }
    }

    pub fn with(mut self, kind: RuleKind) -> Self {
        match kind {
            RuleKind::FlagOrder => self.flag_order = true,
            RuleKind::Path => self.path = true,
            RuleKind::Integer => self.integer = true,
            RuleKind::String => self.string = true,
            RuleKind::Arity => self.arity = true,
        }
        self
    }

    pub fn enabled(&self, kind: RuleKind) -> bool {
        match kind {
            RuleKind::FlagOrder => self.flag_order,
            RuleKind::Path => self.path,
            RuleKind::Integer => self.integer,
            RuleKind::String => self.string,
            RuleKind::Arity => self.arity,
        }
    }
}

fn abstract_value(value: &str, ty: &ArgType, rules: &NormalizationRules) -> String {
    match ty.effective() {
        ArgType::Path if rules.path => "<path>".to_string(),
        ArgType::Integer if rules.integer => "<integer>".to_string(),
        ArgType::String | ArgType::Char if rules.string => {
            format!("<{}>", ty.effective().type_name())
        }
        _ => value.to_string(),
    }
}

/// Canonical key for an argv under the given rules. Fails when the argv
/// does not parse against the syntax.
pub fn normalize_invocation(
    argv: &[String],
    syntax: &SyntaxSpec,
    rules: &NormalizationRules,
) -> Result<String, MatchError> {
    let parsed = match_invocation(syntax, argv)?;

    let mut flags: Vec<String> = parsed.flags.iter().map(|f| f.name.clone()).collect();
    if rules.flag_order {
        flags.sort();
        flags.dedup();
    }

    let mut options: Vec<String> = parsed
        .options
        .iter()
        .map(|o| format!("{}={}", o.name, abstract_value(&o.value, &o.value_type, rules)))
        .collect();
    if rules.flag_order {
        options.sort();
    }

    let mut positionals: Vec<String> = Vec::new();
    let mut last_group: Option<(usize, usize)> = None;
    for positional in &parsed.positionals {
        let group = (positional.position, positional.arg_index);
        if rules.arity && last_group == Some(group) {
            // repeated value of the same variable-arity argument
            continue;
        }
        last_group = Some(group);
        positionals.push(abstract_value(
            &positional.value,
            &positional.value_type,
            rules,
        ));
    }

    Ok(format!(
        "{} flags{{{}}} opts{{{}}} args[{}]",
        parsed.command_name,
        flags.join(","),
        options.join(","),
        positionals.join(",")
    ))
}

/// One corpus line's fate in a coverage report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineOutcome {
    /// Matched a tested invocation with no rules applied.
    Exact,
    /// First matched after enabling this rule (cumulatively).
    Rule(RuleKind),
    Unmatched,
    Unparsed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub total: usize,
    pub exact: usize,
    /// (rule, lines first matched once that rule joined the set), in
    /// ladder order; only enabled rules appear.
    pub incremental: Vec<(RuleKind, usize)>,
    pub unmatched: usize,
    pub unparsed: usize,
    pub outcomes: Vec<LineOutcome>,
}

impl CoverageReport {
    pub fn matched(&self) -> usize {
        self.exact + self.incremental.iter().map(|(_, n)| n).sum::<usize>()
    }
}

/// Splits one corpus line into argv tokens. Quotes group words; no
/// escapes or substitutions (corpus lines are plain invocations).
pub fn split_corpus_line(line: &str) -> Option<Vec<String>> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut quote: Option<char> = None;
    let mut in_token = false;
    for ch in line.chars() {
        match quote {
            Some(q) if ch == q => quote = None,
            Some(_) => current.push(ch),
            None if ch == '\'' || ch == '"' => {
                quote = Some(ch);
                in_token = true;
            }
            None if ch.is_whitespace() => {
                if in_token {
                    tokens.push(std::mem::take(&mut current));
                    in_token = false;
                }
            }
            None => {
                current.push(ch);
                in_token = true;
            }
        }
    }
    if quote.is_some() {
        return None;
    }
    if in_token {
        tokens.push(current);
    }
    if tokens.is_empty() {
        None
    } else {
        Some(tokens)
    }
}

/// Matches each corpus line against the tested invocations under a
/// growing rule set: first with no rules (exact), then adding each
/// enabled rule in ladder order and counting the newly matched lines.
pub fn coverage_report(
    corpus: &[String],
    tested: &[Vec<String>],
    syntax: &SyntaxSpec,
    rules: &NormalizationRules,
) -> CoverageReport {
    // rule sets of the ladder, cumulative, restricted to enabled rules
    let mut levels: Vec<(Option<RuleKind>, NormalizationRules)> =
        vec![(None, NormalizationRules::none())];
    let mut acc = NormalizationRules::none();
    for kind in RuleKind::LADDER {
        if rules.enabled(kind) {
            acc = acc.with(kind);
            levels.push((Some(kind), acc));
        }
    }

    // tested key set per level
    let tested_keys: Vec<std::collections::BTreeSet<String>> = levels
        .iter()
        .map(|(_, level_rules)| {
            tested
                .iter()
                .filter_map(|argv| normalize_invocation(argv, syntax, level_rules).ok())
                .collect()
        })
        .collect();

    let mut exact = 0usize;
    let mut unmatched = 0usize;
    let mut unparsed = 0usize;
    let mut per_rule: Vec<(RuleKind, usize)> = levels
        .iter()
        .filter_map(|(kind, _)| kind.map(|k| (k, 0usize)))
        .collect();
    let mut outcomes = Vec::with_capacity(corpus.len());

    'lines: for line in corpus {
        let Some(argv) = split_corpus_line(line) else {
            unparsed += 1;
            outcomes.push(LineOutcome::Unparsed);
            continue;
        };
        if match_invocation(syntax, &argv).is_err() {
            unparsed += 1;
            outcomes.push(LineOutcome::Unparsed);
            continue;
        }
        for (level, (kind, level_rules)) in levels.iter().enumerate() {
            let key = normalize_invocation(&argv, syntax, level_rules)
                .expect("argv parsed above");
            if tested_keys[level].contains(&key) {
                match kind {
                    None => {
                        exact += 1;
                        outcomes.push(LineOutcome::Exact);
                    }
                    Some(kind) => {
                        per_rule[level - 1].1 += 1;
                        outcomes.push(LineOutcome::Rule(*kind));
                    }
                }
                continue 'lines;
            }
        }
        unmatched += 1;
        outcomes.push(LineOutcome::Unmatched);
    }

    CoverageReport {
        total: corpus.len(),
        exact,
        incremental: per_rule,
        unmatched,
        unparsed,
        outcomes,
    }
}
