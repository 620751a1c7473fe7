//! Parses a concrete argv against a [`SyntaxSpec`].
//!
//! This is deliberately independent of the configuration generator: the
//! generator emits argvs, the matcher re-validates them, and the two
//! never share grammar-walking code. It also backs invocation
//! normalization, targeted mode, and corpus coverage matching.
//!
//! Positions are consumed strictly in order. Short flags may be bundled
//! (`-rf` means `-r -f`) and option values are accepted both as a
//! separate token and in `--opt=value` form.

use thiserror::Error;

use crate::syntax::{Arg, ArgKind, ArgType, Arity, SyntaxSpec, Usage};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedInvocation {
    pub command_name: String,
    pub usage_index: usize,
    /// Flags in occurrence order, by primary name.
    pub flags: Vec<MatchedFlag>,
    pub options: Vec<MatchedOption>,
    pub positionals: Vec<MatchedPositional>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchedFlag {
    pub position: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchedOption {
    pub position: usize,
    pub name: String,
    pub value: String,
    pub value_type: ArgType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchedPositional {
    pub position: usize,
    /// Index of the positional arg within its position.
    pub arg_index: usize,
    pub value: String,
    pub value_type: ArgType,
}

impl ParsedInvocation {
    /// Primary names of all matched flags, deduplicated and sorted.
    pub fn flag_set(&self) -> Vec<String> {
        let mut names: Vec<String> = self.flags.iter().map(|f| f.name.clone()).collect();
        names.sort();
        names.dedup();
        names
    }
}

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("argv is empty")]
    EmptyArgv,
    #[error("argv names command {found:?} but the spec is for {expected:?}")]
    WrongCommand { expected: String, found: String },
    #[error("unknown flag or option {token:?} (rule: every dash token must name a declared arg)")]
    UnknownFlag { token: String },
    #[error("option {name:?} is missing its value (rule: options take exactly one value)")]
    MissingOptionValue { name: String },
    #[error("value {value:?} is not valid for type {ty} of {name:?} (rule: arguments must be well-typed)")]
    IllTypedValue {
        name: String,
        ty: String,
        value: String,
    },
    #[error("{token:?} appears after its position was closed (rule: position order is significant)")]
    OutOfPosition { token: String },
    #[error("too few arguments: positional at position {position} requires at least {required} value(s) (rule: arity must be respected)")]
    TooFewPositionals { position: usize, required: u32 },
    #[error("too many arguments: {token:?} does not fit any remaining position (rule: arity must be respected)")]
    TooManyArguments { token: String },
    #[error("{name:?} given {count} times, exceeding max_repetition {max} (rule: repetition bound)")]
    RepetitionExceeded { name: String, count: u32, max: u32 },
    #[error("argv matches none of the {0} usages; first failure: {1}")]
    NoUsageMatched(usize, Box<MatchError>),
}

/// Parses `argv` (command name first) against the spec, trying each
/// usage in order and returning the first that matches.
pub fn match_invocation(spec: &SyntaxSpec, argv: &[String]) -> Result<ParsedInvocation, MatchError> {
    let (head, rest) = argv.split_first().ok_or(MatchError::EmptyArgv)?;
    if *head != spec.command_name {
        return Err(MatchError::WrongCommand {
            expected: spec.command_name.clone(),
            found: head.clone(),
        });
    }
    let mut first_failure: Option<MatchError> = None;
    for (usage_index, usage) in spec.usages.iter().enumerate() {
        match match_usage(usage, rest) {
            Ok((flags, options, positionals)) => {
                return Ok(ParsedInvocation {
                    command_name: spec.command_name.clone(),
                    usage_index,
                    flags,
                    options,
                    positionals,
                });
            }
            Err(e) => {
                first_failure.get_or_insert(e);
            }
        }
    }
    Err(MatchError::NoUsageMatched(
        spec.usages.len(),
        Box::new(first_failure.unwrap_or(MatchError::EmptyArgv)),
    ))
}

type UsageMatch = (Vec<MatchedFlag>, Vec<MatchedOption>, Vec<MatchedPositional>);

struct NamedHit<'a> {
    position: usize,
    arg: &'a Arg,
    /// Value embedded via `name=value`, if any.
    inline_value: Option<String>,
}

fn find_named<'a>(usage: &'a Usage, from: usize, token: &str) -> Option<NamedHit<'a>> {
    for (pi, position) in usage.positions.iter().enumerate().skip(from) {
        for arg in &position.args {
            if arg.kind == ArgKind::Positional {
                continue;
            }
            for name in arg.names() {
                if token == name {
                    return Some(NamedHit {
                        position: pi,
                        arg,
                        inline_value: None,
                    });
                }
                if arg.kind == ArgKind::Option {
                    if let Some(rest) = token.strip_prefix(name) {
                        if let Some(value) = rest.strip_prefix('=') {
                            return Some(NamedHit {
                                position: pi,
                                arg,
                                inline_value: Some(value.to_string()),
                            });
                        }
                    }
                }
            }
        }
    }
    None
}

/// Splits a bundled short-flag token like `-rf` into the flags it names,
/// searching positions starting at `from`. All letters must resolve to
/// single-dash flags for the split to apply.
fn split_bundle<'a>(usage: &'a Usage, from: usize, token: &str) -> Option<Vec<NamedHit<'a>>> {
    let body = token.strip_prefix('-')?;
    if body.len() < 2 || token.starts_with("--") {
        return None;
    }
    let mut hits = Vec::new();
    for ch in body.chars() {
        let single = format!("-{ch}");
        let hit = find_named(usage, from, &single)?;
        if hit.arg.kind != ArgKind::Flag {
            return None;
        }
        hits.push(hit);
    }
    Some(hits)
}

fn check_typed(name: &str, ty: &ArgType, value: &str) -> Result<(), MatchError> {
    let ill = || MatchError::IllTypedValue {
        name: name.to_string(),
        ty: format!("{ty:?}"),
        value: value.to_string(),
    };
    match ty.effective() {
        ArgType::Integer => value.parse::<i64>().map(|_| ()).map_err(|_| ill()),
        ArgType::Char => {
            if value.chars().count() == 1 {
                Ok(())
            } else {
                Err(ill())
            }
        }
        ArgType::Selection(values) => {
            if values.contains(value) {
                Ok(())
            } else {
                Err(ill())
            }
        }
        _ => Ok(()),
    }
}

fn positional_min(arg: &Arg) -> u32 {
    match arg.arity {
        Arity::ZeroOne | Arity::ZeroPlus => 0,
        Arity::OnePlus => 1,
        Arity::Exactly(n) => n,
    }
}

fn positional_max(arg: &Arg) -> Option<u32> {
    match arg.arity {
        Arity::ZeroOne => Some(1),
        Arity::Exactly(n) => Some(n),
        Arity::ZeroPlus | Arity::OnePlus => None,
    }
}

/// Minimum tokens still required by positions strictly after `pi`.
fn min_required_after(usage: &Usage, pi: usize) -> u32 {
    usage
        .positions
        .iter()
        .skip(pi + 1)
        .flat_map(|p| p.args.iter())
        .filter(|a| a.kind == ArgKind::Positional)
        .map(positional_min)
        .sum()
}

fn match_usage(usage: &Usage, tokens: &[String]) -> Result<UsageMatch, MatchError> {
    let mut flags = Vec::new();
    let mut options = Vec::new();
    let mut positionals = Vec::new();
    // (position, arg_index or usize::MAX for flags/options keyed by name)
    let mut named_counts: std::collections::HashMap<String, u32> = std::collections::HashMap::new();
    let mut pos_counts: std::collections::HashMap<(usize, usize), u32> =
        std::collections::HashMap::new();
    let mut cursor = 0usize; // current position index
    let mut i = 0usize;

    let mut record_named = |arg: &Arg| -> Result<(), MatchError> {
        let count = named_counts.entry(arg.name.clone()).or_insert(0);
        *count += 1;
        if let crate::syntax::Repetition::Bounded(max) = arg.max_repetition {
            if *count > max {
                return Err(MatchError::RepetitionExceeded {
                    name: arg.name.clone(),
                    count: *count,
                    max,
                });
            }
        }
        Ok(())
    };

    while i < tokens.len() {
        let token = &tokens[i];
        let dashy = token.starts_with('-') && token.len() > 1;
        if dashy {
            if let Some(hit) = find_named(usage, cursor, token) {
                cursor = cursor.max(hit.position);
                record_named(hit.arg)?;
                match hit.arg.kind {
                    ArgKind::Flag => {
                        flags.push(MatchedFlag {
                            position: hit.position,
                            name: hit.arg.name.clone(),
                        });
                        i += 1;
                    }
                    ArgKind::Option => {
                        let ty = hit.arg.value_type.clone().expect("option carries a type");
                        let value = if let Some(v) = hit.inline_value {
                            i += 1;
                            v
                        } else {
                            let v = tokens.get(i + 1).cloned().ok_or_else(|| {
                                MatchError::MissingOptionValue {
                                    name: hit.arg.name.clone(),
                                }
                            })?;
                            i += 2;
                            v
                        };
                        check_typed(&hit.arg.name, &ty, &value)?;
                        options.push(MatchedOption {
                            position: hit.position,
                            name: hit.arg.name.clone(),
                            value,
                            value_type: ty,
                        });
                    }
                    ArgKind::Positional => unreachable!("find_named skips positionals"),
                }
                continue;
            }
            if let Some(hits) = split_bundle(usage, cursor, token) {
                for hit in hits {
                    cursor = cursor.max(hit.position);
                    record_named(hit.arg)?;
                    flags.push(MatchedFlag {
                        position: hit.position,
                        name: hit.arg.name.clone(),
                    });
                }
                i += 1;
                continue;
            }
            // `-` alone is a value for dash_as_stdin args and falls
            // through to positional matching; anything else dashy that
            // is declared nowhere is an error.
            if find_named(usage, 0, token).is_some() || split_bundle(usage, 0, token).is_some() {
                return Err(MatchError::OutOfPosition {
                    token: token.clone(),
                });
            }
            return Err(MatchError::UnknownFlag {
                token: token.clone(),
            });
        }

        // Positional value: find the next position (>= cursor) with an
        // open positional slot.
        let mut placed = false;
        'positions: for pi in cursor..usage.positions.len() {
            for (ai, arg) in usage.positions[pi].args.iter().enumerate() {
                if arg.kind != ArgKind::Positional {
                    continue;
                }
                if token == "-" && !arg.dash_as_stdin {
                    continue;
                }
                let count = pos_counts.entry((pi, ai)).or_insert(0);
                if let Some(max) = positional_max(arg) {
                    if *count >= max {
                        continue;
                    }
                }
                // Leave enough tokens for later positions once this
                // slot's minimum is satisfied.
                if *count >= positional_min(arg) {
                    let remaining = (tokens.len() - i) as u32;
                    if remaining <= min_required_after(usage, pi) {
                        continue;
                    }
                }
                let ty = arg.value_type.clone().expect("positional carries a type");
                if token != "-" {
                    check_typed("positional", &ty, token)?;
                }
                *count += 1;
                cursor = pi;
                positionals.push(MatchedPositional {
                    position: pi,
                    arg_index: ai,
                    value: token.clone(),
                    value_type: ty,
                });
                placed = true;
                break 'positions;
            }
        }
        if !placed {
            return Err(MatchError::TooManyArguments {
                token: token.clone(),
            });
        }
        i += 1;
    }

    // Arity minima for every positional slot.
    for (pi, position) in usage.positions.iter().enumerate() {
        for (ai, arg) in position.args.iter().enumerate() {
            if arg.kind != ArgKind::Positional {
                continue;
            }
            let have = pos_counts.get(&(pi, ai)).copied().unwrap_or(0);
            let need = positional_min(arg);
            if have < need {
                return Err(MatchError::TooFewPositionals {
                    position: pi,
                    required: need,
                });
            }
        }
    }
    Ok((flags, options, positionals))
}
