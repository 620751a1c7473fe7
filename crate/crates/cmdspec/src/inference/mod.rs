//! Documentation-to-syntax-spec inference.
//!
//! A command's man page or `--help` output is handed to a completion
//! backend together with a fixed prompt template (role framing, the
//! closed set of argument types, and three worked exemplars). The reply
//! is parsed and validated as a `.synspec.json` document — never
//! executed — and invalid replies are retried with the violation
//! messages included, up to a bounded number of attempts.

mod backend;

pub use backend::{BackendError, FailingBackend, FixtureBackend, LlmBackend, PriorExchange};
#[cfg(feature = "http-backend")]
pub use backend::HttpBackend;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::syntax::{
    mv_exemplar, parse_spec, rm_exemplar, serialize_spec, touch_exemplar, validate_spec,
    SyntaxSpec,
};

pub const DEFAULT_RETRY_LIMIT: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocOrigin {
    Man,
    Help,
    File,
}

#[derive(Debug, Clone)]
pub struct DocSource {
    pub command_name: String,
    pub text: String,
    pub origin: DocOrigin,
}

impl DocSource {
    pub fn new(command_name: &str, text: String, origin: DocOrigin) -> Result<Self, InferenceError> {
        if text.trim().is_empty() {
            return Err(InferenceError::EmptyDocumentation {
                command: command_name.to_string(),
            });
        }
        Ok(DocSource {
            command_name: command_name.to_string(),
            text,
            origin,
        })
    }

    /// Loads `doc.txt` from a fixture directory.
    pub fn from_fixture_dir(command_name: &str, dir: &Path) -> Result<Self, InferenceError> {
        let path = dir.join("doc.txt");
        let text = std::fs::read_to_string(&path).map_err(|e| InferenceError::DocRead {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        DocSource::new(command_name, text, DocOrigin::File)
    }
}

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("documentation for {command} is empty")]
    EmptyDocumentation { command: String },
    #[error("cannot read documentation at {path}: {message}")]
    DocRead { path: String, message: String },
    #[error("prompt configuration needs at least one exemplar")]
    NoExemplars,
    #[error("backend failure: {0}")]
    Backend(#[from] BackendError),
}

/// Prompt template configuration. Exemplars are checked at construction
/// so a misconfigured table fails at startup, not at prompt time.
#[derive(Clone)]
pub struct PromptConfig {
    exemplars: Vec<SyntaxSpec>,
    /// Documentation is truncated at section boundaries to stay under
    /// this budget (characters).
    pub doc_budget: usize,
}

impl PromptConfig {
    pub fn new(exemplars: Vec<SyntaxSpec>, doc_budget: usize) -> Result<Self, InferenceError> {
        if exemplars.is_empty() {
            return Err(InferenceError::NoExemplars);
        }
        Ok(PromptConfig {
            exemplars,
            doc_budget,
        })
    }
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            exemplars: vec![rm_exemplar(), mv_exemplar(), touch_exemplar()],
            doc_budget: 60_000,
        }
    }
}

const ARG_TYPE_NAMES: &str = "path, selection, integer, char, string, other";

/// Builds the inference prompt: role framing, the closed type set, the
/// worked exemplars, the documentation, and — on retries — the previous
/// output with its error messages verbatim.
pub fn build_prompt(doc: &DocSource, prior: Option<&PriorExchange>, config: &PromptConfig) -> String {
    let mut prompt = String::new();
    prompt.push_str(
        "You are an expert in command-line invocation syntax. Read the \
         documentation below and emit a syntax specification as a single \
         JSON document, with no surrounding prose.\n\n",
    );
    prompt.push_str(&format!(
        "Argument value types are restricted to exactly this set: {ARG_TYPE_NAMES}. \
         Use `other` only when no more precise type applies.\n\n",
    ));
    prompt.push_str("Worked examples:\n\n");
    for exemplar in &config.exemplars {
        let text = serialize_spec(exemplar).expect("exemplars are valid by construction");
        prompt.push_str(&format!("Specification for `{}`:\n", exemplar.command_name));
        prompt.push_str(&text);
        prompt.push('\n');
    }
    if let Some(prior) = prior {
        prompt.push_str("Your previous attempt was invalid.\nPrevious output:\n");
        prompt.push_str(&prior.completion);
        prompt.push_str("\nErrors:\n");
        for error in &prior.errors {
            prompt.push_str(error);
            prompt.push('\n');
        }
        prompt.push('\n');
    }
    prompt.push_str(&format!(
        "Documentation for `{}`:\n\n{}\n",
        doc.command_name,
        truncate_doc(&doc.text, config.doc_budget)
    ));
    prompt.push_str(&format!(
        "\nEmit the JSON specification for `{}` now.\n",
        doc.command_name
    ));
    prompt
}

/// Truncates documentation at man-section boundaries, keeping
/// synopsis/options/usage sections ahead of the rest.
fn truncate_doc(text: &str, budget: usize) -> String {
    if text.len() <= budget {
        return text.to_string();
    }
    let sections = split_sections(text);
    let prioritized = |title: &str| {
        let t = title.trim().to_ascii_uppercase();
        t.contains("SYNOPSIS") || t.contains("OPTIONS") || t.contains("USAGE")
    };
    let mut ordered: Vec<&(String, String)> = Vec::new();
    ordered.extend(sections.iter().filter(|(t, _)| prioritized(t)));
    ordered.extend(sections.iter().filter(|(t, _)| !prioritized(t)));
    let mut out = String::new();
    for (title, body) in ordered {
        let chunk_len = title.len() + body.len() + 2;
        if !out.is_empty() && out.len() + chunk_len > budget {
            break;
        }
        out.push_str(title);
        out.push('\n');
        out.push_str(body);
        out.push('\n');
        if out.len() >= budget {
            break;
        }
    }
    out
}

/// Splits man-style text into (header, body) sections; a header is an
/// all-uppercase line. Text before the first header becomes a section
/// with an empty title.
fn split_sections(text: &str) -> Vec<(String, String)> {
    let mut sections: Vec<(String, String)> = vec![(String::new(), String::new())];
    for line in text.lines() {
        let trimmed = line.trim();
        let is_header = !trimmed.is_empty()
            && trimmed.len() >= 3
            && trimmed
                .chars()
                .all(|c| c.is_ascii_uppercase() || c.is_whitespace())
            && !line.starts_with(' ');
        if is_header {
            sections.push((line.to_string(), String::new()));
        } else {
            let (_, body) = sections.last_mut().expect("always one section");
            body.push_str(line);
            body.push('\n');
        }
    }
    sections.retain(|(t, b)| !t.is_empty() || !b.trim().is_empty());
    sections
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Attempt {
    pub prompt_digest: String,
    pub completion: String,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceReport {
    pub command_name: String,
    pub model_id: String,
    pub spec: Option<SyntaxSpec>,
    pub attempts: Vec<Attempt>,
    pub succeeded: bool,
}

fn digest(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hex::encode(&hasher.finalize()[..8])
}

/// Strips a Markdown code fence if the completion is wrapped in one.
fn strip_fence(completion: &str) -> &str {
    let trimmed = completion.trim();
    if let Some(rest) = trimmed.strip_prefix("```") {
        let rest = rest.strip_prefix("json").unwrap_or(rest);
        if let Some(inner) = rest.strip_suffix("```") {
            return inner.trim();
        }
    }
    trimmed
}

/// Runs the prompt → complete → parse → validate loop, stopping at the
/// first valid spec or after `retry_limit` attempts. Transport failures
/// surface as errors; exhausted retries yield `succeeded: false`.
pub fn infer_syntax_spec(
    doc: &DocSource,
    backend: &dyn LlmBackend,
    retry_limit: u32,
    config: &PromptConfig,
) -> Result<InferenceReport, InferenceError> {
    assert!(retry_limit >= 1, "retry_limit must be at least 1");
    let mut attempts: Vec<Attempt> = Vec::new();
    let mut prior: Option<PriorExchange> = None;

    for _ in 0..retry_limit {
        let prompt = build_prompt(doc, prior.as_ref(), config);
        let completion = backend.complete(&prompt, prior.as_ref())?;
        let body = strip_fence(&completion);
        let violations: Vec<String> = match parse_spec(body) {
            Ok(spec) => {
                let violations = validate_spec(&spec);
                if violations.is_empty() {
                    attempts.push(Attempt {
                        prompt_digest: digest(&prompt),
                        completion: completion.clone(),
                        violations: Vec::new(),
                    });
                    return Ok(InferenceReport {
                        command_name: doc.command_name.clone(),
                        model_id: backend.model_id().to_string(),
                        spec: Some(spec),
                        attempts,
                        succeeded: true,
                    });
                }
                violations.iter().map(|v| v.to_string()).collect()
            }
            Err(e) => vec![e.to_string()],
        };
        attempts.push(Attempt {
            prompt_digest: digest(&prompt),
            completion: completion.clone(),
            violations: violations.clone(),
        });
        prior = Some(PriorExchange {
            completion,
            errors: violations,
        });
    }

    Ok(InferenceReport {
        command_name: doc.command_name.clone(),
        model_id: backend.model_id().to_string(),
        spec: None,
        attempts,
        succeeded: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rm_doc() -> DocSource {
        DocSource::new(
            "rm",
            "NAME\n  rm - remove files or directories\nSYNOPSIS\n  rm [-rf] FILE...\n\
             OPTIONS\n  -r  remove recursively\n  -f  ignore nonexistent files\n"
                .into(),
            DocOrigin::Man,
        )
        .unwrap()
    }

    fn valid_rm_completion() -> String {
        serialize_spec(&rm_exemplar()).unwrap()
    }

    #[test]
    fn prompt_contains_exemplars_and_doc() {
        let config = PromptConfig::default();
        let prompt = build_prompt(&rm_doc(), None, &config);
        for name in ["`rm`", "`mv`", "`touch`"] {
            assert!(prompt.contains(name), "missing exemplar {name}");
        }
        assert!(prompt.contains("remove files or directories"));
        assert!(prompt.contains(ARG_TYPE_NAMES));
    }

    #[test]
    fn prompt_includes_prior_errors_verbatim() {
        let config = PromptConfig::default();
        let prior = PriorExchange {
            completion: "{bogus}".into(),
            errors: vec!["first violation text".into(), "second violation text".into()],
        };
        let prompt = build_prompt(&rm_doc(), Some(&prior), &config);
        assert!(prompt.contains("first violation text"));
        assert!(prompt.contains("second violation text"));
        assert!(prompt.contains("{bogus}"));
    }

    #[test]
    fn empty_exemplar_table_fails_at_startup() {
        assert!(matches!(
            PromptConfig::new(vec![], 1000),
            Err(InferenceError::NoExemplars)
        ));
    }

    #[test]
    fn empty_documentation_is_rejected() {
        assert!(DocSource::new("x", "  \n".into(), DocOrigin::Help).is_err());
    }

    #[test]
    fn valid_first_completion_succeeds_in_one_attempt() {
        let backend = FixtureBackend::from_replies([valid_rm_completion()]).unwrap();
        let report =
            infer_syntax_spec(&rm_doc(), &backend, DEFAULT_RETRY_LIMIT, &PromptConfig::default())
                .unwrap();
        assert!(report.succeeded);
        assert_eq!(report.attempts.len(), 1);
        assert_eq!(report.spec.unwrap(), rm_exemplar());
    }

    #[test]
    fn garbage_twice_then_valid_succeeds_on_third_attempt() {
        let backend = FixtureBackend::from_replies([
            "not json at all".into(),
            "{\"command\": \"rm\", \"usages\": []}".into(),
            valid_rm_completion(),
        ])
        .unwrap();
        let report =
            infer_syntax_spec(&rm_doc(), &backend, DEFAULT_RETRY_LIMIT, &PromptConfig::default())
                .unwrap();
        assert!(report.succeeded);
        assert_eq!(report.attempts.len(), 3);
        assert!(!report.attempts[0].violations.is_empty());
        assert!(!report.attempts[1].violations.is_empty());
    }

    #[test]
    fn always_invalid_exhausts_retries_without_a_spec() {
        let backend = FixtureBackend::from_replies(["garbage".to_string()]).unwrap();
        let report = infer_syntax_spec(&rm_doc(), &backend, 3, &PromptConfig::default()).unwrap();
        assert!(!report.succeeded);
        assert!(report.spec.is_none());
        assert_eq!(report.attempts.len(), 3);
    }

    #[test]
    fn transport_failure_is_not_a_validation_failure() {
        let report = infer_syntax_spec(
            &rm_doc(),
            &FailingBackend,
            DEFAULT_RETRY_LIMIT,
            &PromptConfig::default(),
        );
        assert!(matches!(report, Err(InferenceError::Backend(_))));
    }

    #[test]
    fn fenced_completion_is_accepted() {
        let fenced = format!("```json\n{}\n```", valid_rm_completion());
        let backend = FixtureBackend::from_replies([fenced]).unwrap();
        let report =
            infer_syntax_spec(&rm_doc(), &backend, DEFAULT_RETRY_LIMIT, &PromptConfig::default())
                .unwrap();
        assert!(report.succeeded);
    }

    #[test]
    fn succeeded_implies_validated() {
        // property: any reply that leads to succeeded=true revalidates
        let backend = FixtureBackend::from_replies([valid_rm_completion()]).unwrap();
        let report =
            infer_syntax_spec(&rm_doc(), &backend, DEFAULT_RETRY_LIMIT, &PromptConfig::default())
                .unwrap();
        if report.succeeded {
            assert!(validate_spec(report.spec.as_ref().unwrap()).is_empty());
        }
    }

    #[test]
    fn truncation_keeps_options_sections_first() {
        let long_body = "x".repeat(500);
        let text = format!(
            "DESCRIPTION\n{long_body}\nOPTIONS\n  -a  does a thing\nHISTORY\n{long_body}\n"
        );
        let out = truncate_doc(&text, 600);
        assert!(out.contains("OPTIONS"));
        assert!(out.contains("-a  does a thing"));
        assert!(!out.contains("HISTORY"));
    }
}
