//! Configuration generator: turns a validated [`SyntaxSpec`] into a
//! pruned, typed stream of [`InvocationConfig`]s.
//!
//! Each config pairs one concrete argv with one filesystem state drawn
//! from the path model (absolute/relative crossed with five pointer
//! kinds) and an optional stdin payload. Generation is deterministic:
//! the same spec and limits always yield the same config-id sequence.
//!
//! Path arguments are symbolic (`p0`, `p0/c0`, ...) relative to a scratch
//! root chosen at execution time; absolute variants are prefixed with the
//! materialized root by the sandbox. This keeps syscall paths matchable
//! back to their slots by exact string.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::content::{self, ContentKind, ContentSample};
use crate::syntax::{Arg, ArgKind, ArgType, Arity, SyntaxSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    Absolute,
    Relative,
}

impl PathKind {
    pub const ALL: [PathKind; 2] = [PathKind::Absolute, PathKind::Relative];
}

/// What a generated path points at when the environment is materialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointerKind {
    File,
    DirEmpty,
    DirOneChild,
    Nonexistent,
    ParentNonexistent,
}

impl PointerKind {
    pub const ALL: [PointerKind; 5] = [
        PointerKind::File,
        PointerKind::DirEmpty,
        PointerKind::DirOneChild,
        PointerKind::Nonexistent,
        PointerKind::ParentNonexistent,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PointerKind::File => "file",
            PointerKind::DirEmpty => "dir_empty",
            PointerKind::DirOneChild => "dir_one_child",
            PointerKind::Nonexistent => "nonexistent",
            PointerKind::ParentNonexistent => "parent_nonexistent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathState {
    pub path_kind: PathKind,
    pub pointer: PointerKind,
}

/// One instance of the filesystem model: a pointer assignment per
/// declared slot, materialized later under a fresh scratch root.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FsState {
    pub slots: BTreeMap<String, PathState>,
}

impl FsState {
    pub fn empty() -> Self {
        FsState::default()
    }

    /// The argv string for a slot, relative to the scratch root. For
    /// `parent_nonexistent` the rendered path is a missing grandchild.
    pub fn rendered_path(slot: &str, pointer: PointerKind) -> String {
        match pointer {
            PointerKind::ParentNonexistent => format!("{slot}/c0"),
            _ => slot.to_string(),
        }
    }

    pub fn descriptor(&self) -> BTreeMap<String, String> {
        self.slots
            .iter()
            .map(|(slot, st)| {
                (
                    slot.clone(),
                    format!(
                        "{}:{}",
                        match st.path_kind {
                            PathKind::Absolute => "abs",
                            PathKind::Relative => "rel",
                        },
                        st.pointer.as_str()
                    ),
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationLimits {
    /// Maximum flags plus options per invocation.
    pub max_flags_options: usize,
    /// Counts at which variable-arity arguments are instantiated.
    pub variable_arity_instantiations: Vec<usize>,
    pub integer_samples: Vec<i64>,
    pub string_samples: usize,
    /// Hard cap on emitted configs per command.
    pub config_cap: usize,
    pub seed: u64,
}

impl Default for GenerationLimits {
    fn default() -> Self {
        GenerationLimits {
            max_flags_options: 4,
            variable_arity_instantiations: vec![1, 2],
            integer_samples: vec![-1, 0, 1],
            string_samples: 3,
            config_cap: 1_000_000,
            seed: 0,
        }
    }
}

/// Candidate value strings for an argument type. Path types return one
/// placeholder per pointer kind; the concrete string is resolved when
/// the invocation is paired with an environment.
pub fn typed_values(ty: &ArgType, limits: &GenerationLimits) -> Vec<String> {
    match ty.effective() {
        ArgType::Selection(values) => values.iter().cloned().collect(),
        ArgType::Integer => limits.integer_samples.iter().map(|n| n.to_string()).collect(),
        ArgType::Char => content::char_samples(),
        ArgType::String => content::string_samples(limits.string_samples),
        ArgType::Path => PointerKind::ALL
            .iter()
            .map(|p| format!("<path:{}>", p.as_str()))
            .collect(),
        ArgType::Other => unreachable!("effective() folds other into string"),
    }
}

/// One selected flag or option occurrence within a combination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedChoice {
    pub position: usize,
    pub arg: Arg,
    /// Concrete option value; `None` for flags and for path-typed
    /// options (which become path slots).
    pub value: Option<String>,
}

pub type Selection = Vec<NamedChoice>;

/// Every subset of a usage's flags/options with size at most
/// `max_flags_options`, each option slot crossed with its typed sample
/// values. Deterministic order: subsets by index order, values in
/// sample order.
pub fn flag_option_combinations(spec: &SyntaxSpec, limits: &GenerationLimits) -> Vec<(usize, Selection)> {
    let mut out = Vec::new();
    for (usage_index, usage) in spec.usages.iter().enumerate() {
        // named args in (position, arg) order
        let named: Vec<(usize, &Arg)> = usage
            .positions
            .iter()
            .enumerate()
            .flat_map(|(pi, p)| {
                p.args
                    .iter()
                    .filter(|a| a.kind != ArgKind::Positional)
                    .map(move |a| (pi, a))
            })
            .collect();
        let mut subsets: Vec<Vec<(usize, &Arg)>> = vec![Vec::new()];
        for item in &named {
            let mut extended = Vec::new();
            for subset in &subsets {
                if subset.len() < limits.max_flags_options {
                    let mut s = subset.clone();
                    s.push(*item);
                    extended.push(s);
                }
            }
            subsets.extend(extended);
        }
        subsets.sort_by_key(|s| {
            (
                s.len(),
                s.iter().map(|(pi, a)| (*pi, a.name.clone())).collect::<Vec<_>>(),
            )
        });
        for subset in subsets {
            // cross product over option values
            let mut selections: Vec<Selection> = vec![Vec::new()];
            for (pi, arg) in subset {
                let choices: Vec<Option<String>> = match (&arg.kind, &arg.value_type) {
                    (ArgKind::Flag, _) => vec![None],
                    (ArgKind::Option, Some(ty)) if ty.is_path() => vec![None],
                    (ArgKind::Option, Some(ty)) => typed_values(ty, limits)
                        .into_iter()
                        .map(Some)
                        .collect(),
                    _ => vec![None],
                };
                let mut next = Vec::new();
                for sel in &selections {
                    for choice in &choices {
                        let mut s = sel.clone();
                        s.push(NamedChoice {
                            position: pi,
                            arg: arg.clone(),
                            value: choice.clone(),
                        });
                        next.push(s);
                    }
                }
                selections = next;
            }
            for sel in selections {
                out.push((usage_index, sel));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateToken {
    Literal(String),
    /// A path argument slot; slot names are assigned in token order.
    PathSlot,
}

/// A concrete argv shape with path slots still open.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgvTemplate {
    pub command_name: String,
    pub usage_index: usize,
    pub tokens: Vec<TemplateToken>,
    /// Attach stdin content sweeps to this template.
    pub wants_stdin_sweep: bool,
    /// Template produced by the `dash_as_stdin` expansion; stdin carries
    /// content and one positional is the literal `-`.
    pub dash_stdin: bool,
}

impl ArgvTemplate {
    pub fn path_slot_count(&self) -> usize {
        self.tokens
            .iter()
            .filter(|t| matches!(t, TemplateToken::PathSlot))
            .count()
    }
}

/// All environments for a template: the cross product, per path slot, of
/// {absolute, relative} and the five pointer kinds. Zero slots yield
/// exactly one empty state.
pub fn environments_for(template: &ArgvTemplate) -> Vec<FsState> {
    let k = template.path_slot_count();
    environments_for_slots(k)
}

pub fn environments_for_slots(k: usize) -> Vec<FsState> {
    let total = 10usize.pow(k as u32);
    let mut out = Vec::with_capacity(total);
    for mut code in 0..total {
        let mut slots = BTreeMap::new();
        for slot in 0..k {
            let digit = code % 10;
            code /= 10;
            let path_kind = PathKind::ALL[digit / 5];
            let pointer = PointerKind::ALL[digit % 5];
            slots.insert(format!("p{slot}"), PathState { path_kind, pointer });
        }
        out.push(FsState { slots });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    /// Whole-input run of a parallelizability probe group.
    ParallelWhole,
    /// One line-partition out of `total` for a parallelizability probe.
    ParallelPart { index: u32, total: u32 },
    /// Multi-argument run of a splittability probe group.
    SplitWhole,
    /// Single-argument run `index` of a splittability probe group.
    SplitPart { index: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigRole {
    Sweep,
    /// Repeat of a sweep config, used for nondeterminism detection.
    Repeat,
    Probe { group: String, kind: ProbeKind },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvocationConfig {
    /// Command name first; path arguments symbolic relative to scratch.
    pub argv: Vec<String>,
    pub env: FsState,
    pub stdin: Option<ContentSample>,
    /// argv index -> slot name, for every path-slot token.
    pub path_slots: Vec<(usize, String)>,
    pub role: ConfigRole,
    /// Per-slot file payload overrides (probe groups give each file its
    /// own partition); slots without an entry get the default text.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub slot_contents: BTreeMap<String, ContentSample>,
    pub config_id: String,
}

impl InvocationConfig {
    pub fn new(
        argv: Vec<String>,
        env: FsState,
        stdin: Option<ContentSample>,
        path_slots: Vec<(usize, String)>,
        role: ConfigRole,
    ) -> Self {
        let slot_contents = BTreeMap::new();
        let config_id = compute_config_id(&argv, &env, stdin.as_ref(), &role, &slot_contents);
        InvocationConfig {
            argv,
            env,
            stdin,
            path_slots,
            role,
            slot_contents,
            config_id,
        }
    }

    /// Overrides file payloads per slot, recomputing the config id.
    pub fn with_slot_contents(mut self, slot_contents: BTreeMap<String, ContentSample>) -> Self {
        self.slot_contents = slot_contents;
        self.config_id = compute_config_id(
            &self.argv,
            &self.env,
            self.stdin.as_ref(),
            &self.role,
            &self.slot_contents,
        );
        self
    }

    /// Files declared by the environment that carry content; the
    /// generator fills file pointers with the full text sample.
    pub fn file_content(&self) -> ContentSample {
        content::default_sample(ContentKind::Text)
    }
}

fn compute_config_id(
    argv: &[String],
    env: &FsState,
    stdin: Option<&ContentSample>,
    role: &ConfigRole,
    slot_contents: &BTreeMap<String, ContentSample>,
) -> String {
    let mut descriptor = serde_json::json!({
        "argv": argv,
        "env": env.descriptor(),
        "stdin": stdin.map(|s| s.descriptor()),
        "role": role,
    });
    if !slot_contents.is_empty() {
        let contents: BTreeMap<&String, String> = slot_contents
            .iter()
            .map(|(slot, sample)| (slot, sample.descriptor()))
            .collect();
        descriptor["slot_contents"] = serde_json::to_value(contents).expect("descriptor map");
    }
    let mut hasher = Sha256::new();
    hasher.update(descriptor.to_string().as_bytes());
    hex::encode(&hasher.finalize()[..16])
}

/// Expands one usage selection into argv templates: positional arity
/// instantiation plus sample-offset variants for non-path positionals.
fn templates_for_selection(
    spec: &SyntaxSpec,
    usage_index: usize,
    selection: &Selection,
    limits: &GenerationLimits,
) -> Vec<ArgvTemplate> {
    let usage = &spec.usages[usage_index];
    // positional args with their instantiation counts
    let positionals: Vec<(usize, &Arg)> = usage
        .positions
        .iter()
        .enumerate()
        .flat_map(|(pi, p)| {
            p.args
                .iter()
                .filter(|a| a.kind == ArgKind::Positional)
                .map(move |a| (pi, a))
        })
        .collect();
    let count_choices: Vec<Vec<usize>> = positionals
        .iter()
        .map(|(_, arg)| match arg.arity {
            Arity::ZeroOne => vec![0, 1],
            Arity::ZeroPlus => {
                let mut v = vec![0];
                v.extend(limits.variable_arity_instantiations.iter().copied());
                v
            }
            Arity::OnePlus => limits.variable_arity_instantiations.clone(),
            Arity::Exactly(n) => vec![n as usize],
        })
        .collect();

    let mut count_assignments: Vec<Vec<usize>> = vec![Vec::new()];
    for choices in &count_choices {
        let mut next = Vec::new();
        for assignment in &count_assignments {
            for &c in choices {
                let mut a = assignment.clone();
                a.push(c);
                next.push(a);
            }
        }
        count_assignments = next;
    }

    let mut templates = Vec::new();
    for counts in &count_assignments {
        // sample-offset variants for non-path positionals
        let needs_offsets = positionals.iter().zip(counts).any(|((_, arg), &c)| {
            c > 0 && !arg.value_type.as_ref().is_some_and(ArgType::is_path)
        });
        let offset_range = if needs_offsets { limits.string_samples.max(1) } else { 1 };
        for offset in 0..offset_range {
            let mut tokens = Vec::new();
            let mut dash_candidates = Vec::new();
            for (pi, _position) in usage.positions.iter().enumerate() {
                for choice in selection.iter().filter(|c| c.position == pi) {
                    render_named(choice, &mut tokens);
                }
                let mut slot_iter = positionals.iter().zip(counts.iter());
                for ((ppi, arg), &count) in slot_iter.by_ref() {
                    if *ppi != pi {
                        continue;
                    }
                    let ty = arg.value_type.as_ref().expect("positional carries a type");
                    for rep in 0..count {
                        if ty.is_path() {
                            if arg.dash_as_stdin && rep == 0 {
                                dash_candidates.push(tokens.len());
                            }
                            tokens.push(TemplateToken::PathSlot);
                        } else {
                            let samples = typed_values(ty, limits);
                            let value = samples[(offset + rep) % samples.len()].clone();
                            tokens.push(TemplateToken::Literal(value));
                        }
                    }
                }
            }
            let has_paths = tokens.iter().any(|t| matches!(t, TemplateToken::PathSlot));
            templates.push(ArgvTemplate {
                command_name: spec.command_name.clone(),
                usage_index,
                tokens: tokens.clone(),
                wants_stdin_sweep: !has_paths,
                dash_stdin: false,
            });
            // one extra config per dash_as_stdin path arg: the first
            // occurrence becomes a literal `-` fed from stdin
            if let Some(&idx) = dash_candidates.first() {
                let mut dash_tokens = tokens;
                dash_tokens[idx] = TemplateToken::Literal("-".into());
                templates.push(ArgvTemplate {
                    command_name: spec.command_name.clone(),
                    usage_index,
                    tokens: dash_tokens,
                    wants_stdin_sweep: false,
                    dash_stdin: true,
                });
            }
        }
    }
    templates.dedup();
    templates
}

fn render_named(choice: &NamedChoice, tokens: &mut Vec<TemplateToken>) {
    match choice.arg.kind {
        ArgKind::Flag => tokens.push(TemplateToken::Literal(choice.arg.name.clone())),
        ArgKind::Option => {
            let is_path = choice.arg.value_type.as_ref().is_some_and(ArgType::is_path);
            if is_path {
                if choice.arg.flag_followed_by_equals {
                    // equals form cannot hold an unresolved slot token;
                    // rendered at env-pairing time by the config builder,
                    // so emit name and slot separately and join later.
                    tokens.push(TemplateToken::Literal(format!("{}=", choice.arg.name)));
                    tokens.push(TemplateToken::PathSlot);
                } else {
                    tokens.push(TemplateToken::Literal(choice.arg.name.clone()));
                    tokens.push(TemplateToken::PathSlot);
                }
            } else {
                let value = choice.value.clone().unwrap_or_default();
                if choice.arg.flag_followed_by_equals {
                    tokens.push(TemplateToken::Literal(format!(
                        "{}={}",
                        choice.arg.name, value
                    )));
                } else {
                    tokens.push(TemplateToken::Literal(choice.arg.name.clone()));
                    tokens.push(TemplateToken::Literal(value));
                }
            }
        }
        ArgKind::Positional => unreachable!("selections contain named args only"),
    }
}

/// Builds the concrete configs for one template under one environment.
fn configs_for_env(template: &ArgvTemplate, env: FsState) -> Vec<InvocationConfig> {
    let mut argv = vec![template.command_name.clone()];
    let mut path_slots = Vec::new();
    let mut slot = 0usize;
    let mut pending_equals: Option<String> = None;
    for token in &template.tokens {
        match token {
            TemplateToken::Literal(s) if s.ends_with('=') && s.starts_with('-') => {
                pending_equals = Some(s.clone());
            }
            TemplateToken::Literal(s) => argv.push(s.clone()),
            TemplateToken::PathSlot => {
                let name = format!("p{slot}");
                let pointer = env.slots[&name].pointer;
                let rendered = FsState::rendered_path(&name, pointer);
                if let Some(prefix) = pending_equals.take() {
                    argv.push(format!("{prefix}{rendered}"));
                } else {
                    argv.push(rendered);
                }
                path_slots.push((argv.len() - 1, name));
                slot += 1;
            }
        }
    }

    let mut out = Vec::new();
    if template.dash_stdin {
        out.push(InvocationConfig::new(
            argv,
            env,
            Some(content::default_sample(ContentKind::Text)),
            path_slots,
            ConfigRole::Sweep,
        ));
    } else if template.wants_stdin_sweep {
        out.push(InvocationConfig::new(
            argv.clone(),
            env.clone(),
            None,
            path_slots.clone(),
            ConfigRole::Sweep,
        ));
        for kind in ContentKind::ALL {
            out.push(InvocationConfig::new(
                argv.clone(),
                env.clone(),
                Some(content::default_sample(kind)),
                path_slots.clone(),
                ConfigRole::Sweep,
            ));
        }
    } else {
        out.push(InvocationConfig::new(argv, env, None, path_slots, ConfigRole::Sweep));
    }
    out
}

/// Lazy, deterministic stream of configs for a validated spec.
///
/// Warns on stderr and truncates when the per-command cap is hit.
pub fn generate_configs<'a>(
    spec: &'a SyntaxSpec,
    limits: &'a GenerationLimits,
) -> impl Iterator<Item = InvocationConfig> + 'a {
    let selections = flag_option_combinations(spec, limits);
    let cap = limits.config_cap;
    let mut emitted = 0usize;
    let mut warned = false;
    let mut seen = std::collections::HashSet::new();
    selections
        .into_iter()
        .flat_map(move |(usage_index, selection)| {
            templates_for_selection(spec, usage_index, &selection, limits)
        })
        .flat_map(move |template| {
            environments_for(&template)
                .into_iter()
                .flat_map(move |env| configs_for_env(&template, env))
                .collect::<Vec<_>>()
        })
        .filter(move |config| seen.insert(config.config_id.clone()))
        .take_while(move |_| {
            if emitted >= cap {
                if !warned {
                    eprintln!("warning: config cap of {cap} reached; truncating generation");
                    warned = true;
                }
                return false;
            }
            emitted += 1;
            true
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::match_invocation;
    use crate::syntax::{rm_exemplar, Position, Usage};
    use std::collections::BTreeSet;

    fn flags_only_spec(n: usize) -> SyntaxSpec {
        let args = (0..n).map(|i| Arg::flag(&format!("-{}", (b'a' + i as u8) as char))).collect();
        SyntaxSpec {
            command_name: "x".into(),
            usages: vec![Usage {
                positions: vec![Position::new(args)],
            }],
        }
    }

    fn binomial(n: usize, k: usize) -> usize {
        if k > n {
            return 0;
        }
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    /// Independent subset-counting oracle: brute-force enumeration of
    /// index subsets, counted without touching the generator internals.
    fn brute_force_subset_count(n: usize, k: usize) -> usize {
        let mut count = 0;
        for mask in 0u32..(1 << n) {
            if (mask.count_ones() as usize) <= k {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn rm_flag_combinations_are_the_power_set() {
        let spec = rm_exemplar();
        let limits = GenerationLimits::default();
        let combos = flag_option_combinations(&spec, &limits);
        assert_eq!(combos.len(), 4);
        let sets: BTreeSet<Vec<String>> = combos
            .iter()
            .map(|(_, sel)| {
                let mut names: Vec<String> = sel.iter().map(|c| c.arg.name.clone()).collect();
                names.sort();
                names
            })
            .collect();
        assert!(sets.contains(&vec![]));
        assert!(sets.contains(&vec!["-f".to_string(), "-r".to_string()]));
    }

    #[test]
    fn combination_counts_match_brute_force_oracle() {
        for n in [0, 1, 3, 6, 10] {
            for k in [0, 1, 2, 4] {
                let spec = flags_only_spec(n);
                let limits = GenerationLimits {
                    max_flags_options: k,
                    ..GenerationLimits::default()
                };
                let got = flag_option_combinations(&spec, &limits).len();
                let expected = brute_force_subset_count(n, k);
                assert_eq!(got, expected, "n={n} k={k}");
                // cross-check the closed form too
                let closed: usize = (0..=k).map(|i| binomial(n, i)).sum();
                assert_eq!(got, closed, "closed form n={n} k={k}");
            }
        }
    }

    #[test]
    fn limit_zero_yields_only_empty_selection() {
        let spec = flags_only_spec(5);
        let limits = GenerationLimits {
            max_flags_options: 0,
            ..GenerationLimits::default()
        };
        let combos = flag_option_combinations(&spec, &limits);
        assert_eq!(combos.len(), 1);
        assert!(combos[0].1.is_empty());
    }

    #[test]
    fn typed_values_per_spec() {
        let limits = GenerationLimits::default();
        let sel = ArgType::Selection(
            ["always", "never", "auto"].iter().map(|s| s.to_string()).collect(),
        );
        assert_eq!(typed_values(&sel, &limits), vec!["always", "auto", "never"]);
        assert_eq!(
            typed_values(&ArgType::Integer, &limits),
            vec!["-1", "0", "1"]
        );
        assert_eq!(typed_values(&ArgType::Path, &limits).len(), 5);
    }

    #[test]
    fn one_path_slot_yields_ten_environments() {
        // 2 path kinds x 5 pointer kinds, from the model enumeration
        assert_eq!(environments_for_slots(1).len(), 10);
        assert_eq!(environments_for_slots(0).len(), 1);
        assert_eq!(environments_for_slots(2).len(), 100);
    }

    #[test]
    fn environment_product_matches_naive_enumeration() {
        // independent oracle: nested loops over the model components
        let mut expected = Vec::new();
        for pk0 in PathKind::ALL {
            for pt0 in PointerKind::ALL {
                for pk1 in PathKind::ALL {
                    for pt1 in PointerKind::ALL {
                        expected.push(((pk0, pt0), (pk1, pt1)));
                    }
                }
            }
        }
        let got = environments_for_slots(2);
        assert_eq!(got.len(), expected.len());
        let got_set: BTreeSet<_> = got
            .iter()
            .map(|e| {
                (
                    (e.slots["p0"].path_kind, e.slots["p0"].pointer),
                    (e.slots["p1"].path_kind, e.slots["p1"].pointer),
                )
            })
            .collect();
        assert_eq!(got_set.len(), expected.len());
    }

    #[test]
    fn rm_config_count_matches_independent_enumerator() {
        // Naive oracle: for each of the 4 flag subsets, for each path
        // count c in {1,2}, 10^c environments, one config each.
        let expected: usize = 4 * (10 + 100);
        let spec = rm_exemplar();
        let limits = GenerationLimits::default();
        let configs: Vec<_> = generate_configs(&spec, &limits).collect();
        assert_eq!(configs.len(), expected);
    }

    #[test]
    fn rm_stream_contains_the_motivating_configs() {
        let spec = rm_exemplar();
        let limits = GenerationLimits::default();
        let configs: Vec<_> = generate_configs(&spec, &limits).collect();
        let has = |argv: &[&str], pointer: PointerKind| {
            configs.iter().any(|c| {
                c.argv == argv.iter().map(|s| s.to_string()).collect::<Vec<_>>()
                    && c.env.slots.get("p0").map(|s| s.pointer) == Some(pointer)
            })
        };
        assert!(has(&["rm", "p0"], PointerKind::File));
        assert!(has(&["rm", "-f", "-r", "p0"], PointerKind::DirOneChild));
    }

    #[test]
    fn bare_spec_sweeps_stdin_kinds() {
        let spec = SyntaxSpec {
            command_name: "true".into(),
            usages: vec![Usage {
                positions: vec![],
            }],
        };
        let limits = GenerationLimits::default();
        let configs: Vec<_> = generate_configs(&spec, &limits).collect();
        // bare invocation: empty stdin plus one per content kind
        assert_eq!(configs.len(), 5);
        assert!(configs.iter().any(|c| c.stdin.is_none()));
        for kind in ContentKind::ALL {
            assert!(configs.iter().any(|c| c.stdin.as_ref().map(|s| s.kind) == Some(kind)));
        }
    }

    #[test]
    fn stream_is_deterministic() {
        let spec = rm_exemplar();
        let limits = GenerationLimits::default();
        let a: Vec<String> = generate_configs(&spec, &limits).map(|c| c.config_id).collect();
        let b: Vec<String> = generate_configs(&spec, &limits).map(|c| c.config_id).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn config_ids_are_distinct() {
        let spec = rm_exemplar();
        let limits = GenerationLimits::default();
        let ids: Vec<String> = generate_configs(&spec, &limits).map(|c| c.config_id).collect();
        let unique: BTreeSet<_> = ids.iter().collect();
        assert_eq!(unique.len(), ids.len());
    }

    #[test]
    fn every_argv_revalidates_against_the_grammar() {
        let spec = rm_exemplar();
        let limits = GenerationLimits::default();
        for config in generate_configs(&spec, &limits) {
            match_invocation(&spec, &config.argv)
                .unwrap_or_else(|e| panic!("argv {:?} rejected: {e}", config.argv));
        }
    }

    #[test]
    fn no_config_exceeds_flag_limit() {
        let spec = flags_only_spec(6);
        let limits = GenerationLimits {
            max_flags_options: 2,
            ..GenerationLimits::default()
        };
        for config in generate_configs(&spec, &limits) {
            let flags = config.argv.iter().filter(|t| t.starts_with('-')).count();
            assert!(flags <= 2, "argv {:?}", config.argv);
        }
    }

    #[test]
    fn cap_truncates_the_stream() {
        let spec = rm_exemplar();
        let limits = GenerationLimits {
            config_cap: 7,
            ..GenerationLimits::default()
        };
        assert_eq!(generate_configs(&spec, &limits).count(), 7);
    }

    #[test]
    fn dash_as_stdin_adds_a_dash_config() {
        let mut spec = rm_exemplar();
        spec.command_name = "cat".into();
        spec.usages[0].positions = vec![Position::new(vec![{
            let mut a = Arg::positional(ArgType::Path, Arity::OnePlus);
            a.dash_as_stdin = true;
            a
        }])];
        let limits = GenerationLimits {
            variable_arity_instantiations: vec![1],
            ..GenerationLimits::default()
        };
        let configs: Vec<_> = generate_configs(&spec, &limits).collect();
        assert!(configs.iter().any(|c| c.argv.contains(&"-".to_string()) && c.stdin.is_some()));
    }
}
