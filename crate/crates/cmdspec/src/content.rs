//! Content corpus for file and stream payloads.
//!
//! Four content kinds are supported: plain text, arithmetic expressions,
//! JSON, and PNG image data. Text, JSON, and image fixtures are bundled;
//! math samples are generated from a small expression grammar (the four
//! basic operations plus parentheses) enumerated to a fixed depth, so
//! the corpus is deterministic without any bundled math fixture.
//!
//! Each kind ships full samples plus partial variants: a strict
//! line-prefix for text-like kinds, truncated bytes for images.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContentKind {
    Text,
    Math,
    Json,
    Image,
}

impl ContentKind {
    pub const ALL: [ContentKind; 4] = [
        ContentKind::Text,
        ContentKind::Math,
        ContentKind::Json,
        ContentKind::Image,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ContentKind::Text => "text",
            ContentKind::Math => "math",
            ContentKind::Json => "json",
            ContentKind::Image => "image",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Full,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentSample {
    pub kind: ContentKind,
    pub variant: Variant,
    /// Stable name, used in config descriptors and digests.
    pub label: String,
    #[serde(with = "crate::b64")]
    pub payload: Vec<u8>,
}

impl ContentSample {
    pub fn descriptor(&self) -> String {
        format!("{}:{}:{}", self.kind.as_str(), variant_str(self.variant), self.label)
    }
}

fn variant_str(v: Variant) -> &'static str {
    match v {
        Variant::Full => "full",
        Variant::Partial => "partial",
    }
}

const TEXT_FIXTURE: &str = include_str!("../fixtures/content/text.txt");
const JSON_FIXTURE: &str = include_str!("../fixtures/content/data.json");
const PNG_FIXTURES: [&[u8]; 3] = [
    include_bytes!("../fixtures/content/image_0.png"),
    include_bytes!("../fixtures/content/image_1.png"),
    include_bytes!("../fixtures/content/image_2.png"),
];

/// First `lines` lines of `text`, trailing newline included. Always a
/// strict prefix of the input for `lines` below the line count.
fn line_prefix(text: &str, lines: usize) -> String {
    let mut out = String::new();
    for line in text.lines().take(lines) {
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// Arithmetic expressions over `+ - * /` and parentheses, enumerated
/// from the grammar to a fixed nesting depth.
pub fn math_expressions() -> Vec<String> {
    // depth 0: atoms; depth k: (e op e) over depth k-1 picks.
    let atoms = ["1", "2", "7"];
    let ops = ["+", "-", "*", "/"];
    let mut exprs: Vec<String> = Vec::new();
    for op in ops {
        for a in atoms {
            for b in atoms {
                exprs.push(format!("{a}{op}{b}"));
            }
        }
    }
    // one level of nesting, kept small
    exprs.push("(1+2)*3".into());
    exprs.push("(7-2)/(1+4)".into());
    exprs.push("2*(3+4)-5".into());
    exprs
}

fn math_document() -> String {
    let mut doc = String::new();
    for e in math_expressions() {
        doc.push_str(&e);
        doc.push('\n');
    }
    doc
}

/// All samples for one content kind: at least one full and one partial.
pub fn content_samples(kind: ContentKind) -> Vec<ContentSample> {
    match kind {
        ContentKind::Text => {
            let full = TEXT_FIXTURE.to_string();
            let partial = line_prefix(&full, 5);
            vec![
                sample(kind, Variant::Full, "gutenberg-style", full.into_bytes()),
                sample(kind, Variant::Partial, "gutenberg-style", partial.into_bytes()),
            ]
        }
        ContentKind::Math => {
            let full = math_document();
            let partial = line_prefix(&full, 4);
            vec![
                sample(kind, Variant::Full, "grammar", full.into_bytes()),
                sample(kind, Variant::Partial, "grammar", partial.into_bytes()),
            ]
        }
        ContentKind::Json => {
            let full = JSON_FIXTURE.to_string();
            let partial = line_prefix(&full, 3);
            vec![
                sample(kind, Variant::Full, "records", full.into_bytes()),
                sample(kind, Variant::Partial, "records", partial.into_bytes()),
            ]
        }
        ContentKind::Image => {
            let mut out = Vec::new();
            for (i, png) in PNG_FIXTURES.iter().enumerate() {
                out.push(sample(
                    kind,
                    Variant::Full,
                    &format!("png-{i}"),
                    png.to_vec(),
                ));
            }
            // partial image: truncated bytes of the first fixture
            let cut = PNG_FIXTURES[0].len() / 2;
            out.push(sample(
                kind,
                Variant::Partial,
                "png-0",
                PNG_FIXTURES[0][..cut].to_vec(),
            ));
            out
        }
    }
}

/// The canonical full sample for a kind, used when a single payload is
/// needed (e.g. file contents in generated environments).
pub fn default_sample(kind: ContentKind) -> ContentSample {
    content_samples(kind)
        .into_iter()
        .next()
        .expect("every kind has at least one sample")
}

fn sample(kind: ContentKind, variant: Variant, label: &str, payload: Vec<u8>) -> ContentSample {
    ContentSample {
        kind,
        variant,
        label: label.to_string(),
        payload,
    }
}

/// String argument samples: a word present in the text corpus, a word
/// absent from it, and the empty string.
/// Splits `payload` into `n` contiguous chunks on line boundaries.
/// Invariant: the concatenation of the parts is exactly `payload`;
/// empty parts are allowed when there are fewer lines than partitions.
pub fn line_partitions(payload: &[u8], n: usize) -> Vec<Vec<u8>> {
    assert!(n >= 1, "partition count must be positive");
    // byte offsets just after each newline, plus the end of the payload
    let mut boundaries: Vec<usize> = payload
        .iter()
        .enumerate()
        .filter(|(_, b)| **b == b'\n')
        .map(|(i, _)| i + 1)
        .collect();
    if boundaries.last() != Some(&payload.len()) {
        boundaries.push(payload.len());
    }
    let lines = boundaries.len();
    let mut parts = Vec::with_capacity(n);
    let mut start = 0usize;
    for k in 0..n {
        // first (k+1)*lines/n lines go to parts 0..=k
        let upto = ((k + 1) * lines) / n;
        let end = if upto == 0 { start } else { boundaries[upto - 1] };
        parts.push(payload[start..end.max(start)].to_vec());
        start = start.max(end);
    }
    parts
}

pub fn string_samples(count: usize) -> Vec<String> {
    let pool = [
        "the".to_string(),
        "zyzzogeton".to_string(),
        String::new(),
        "People".to_string(),
        "qwxjkv".to_string(),
    ];
    pool.into_iter().take(count).collect()
}

/// Char argument samples: a letter, a digit, and a punctuation mark.
pub fn char_samples() -> Vec<String> {
    vec!["a".into(), "7".into(), ",".into()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kind_has_full_and_partial() {
        for kind in ContentKind::ALL {
            let samples = content_samples(kind);
            assert!(samples.iter().any(|s| s.variant == Variant::Full), "{kind:?}");
            assert!(samples.iter().any(|s| s.variant == Variant::Partial), "{kind:?}");
        }
    }

    #[test]
    fn partial_text_is_a_strict_line_prefix() {
        for kind in [ContentKind::Text, ContentKind::Math, ContentKind::Json] {
            let samples = content_samples(kind);
            let full = samples.iter().find(|s| s.variant == Variant::Full).unwrap();
            let partial = samples.iter().find(|s| s.variant == Variant::Partial).unwrap();
            assert!(full.payload.starts_with(&partial.payload), "{kind:?}");
            assert!(partial.payload.len() < full.payload.len(), "{kind:?}");
            // prefix ends at a line boundary
            assert_eq!(partial.payload.last(), Some(&b'\n'), "{kind:?}");
        }
    }

    #[test]
    fn partial_image_is_truncated_bytes() {
        let samples = content_samples(ContentKind::Image);
        let full = &samples[0];
        let partial = samples.iter().find(|s| s.variant == Variant::Partial).unwrap();
        assert!(full.payload.starts_with(&partial.payload));
        assert!(partial.payload.len() < full.payload.len());
    }

    #[test]
    fn math_grammar_yields_multiple_samples() {
        let exprs = math_expressions();
        assert!(exprs.len() >= 2);
        assert!(exprs.contains(&"(1+2)*3".to_string()));
    }

    #[test]
    fn images_are_png() {
        for s in content_samples(ContentKind::Image) {
            if s.variant == Variant::Full {
                assert_eq!(&s.payload[..4], b"\x89PNG");
            }
        }
    }

    #[test]
    fn content_is_deterministic() {
        for kind in ContentKind::ALL {
            assert_eq!(content_samples(kind), content_samples(kind));
        }
    }

    #[test]
    fn line_partitions_concatenate_to_the_input() {
        // [DERIVED] oracle: concat(parts) == payload for every payload
        // shape (trailing newline, none, empty, fewer lines than parts).
        let payloads: Vec<Vec<u8>> = vec![
            b"a\nb\nc\n".to_vec(),
            b"a\nb\nc".to_vec(),
            b"single line no newline".to_vec(),
            b"".to_vec(),
            default_sample(ContentKind::Text).payload,
        ];
        for payload in &payloads {
            for n in 1..=5 {
                let parts = line_partitions(payload, n);
                assert_eq!(parts.len(), n);
                let joined: Vec<u8> = parts.concat();
                assert_eq!(&joined, payload, "n={n}");
            }
        }
    }

    #[test]
    fn line_partitions_split_on_line_boundaries() {
        // [TRIVIAL] every non-empty non-final part ends with a newline.
        let parts = line_partitions(b"a\nbb\nccc\ndddd\n", 3);
        for part in &parts[..2] {
            if !part.is_empty() {
                assert_eq!(*part.last().unwrap(), b'\n');
            }
        }
        assert!(parts.iter().filter(|p| !p.is_empty()).count() >= 2);
    }
}
