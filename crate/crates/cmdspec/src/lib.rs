//! Behavioral specification mining for opaque shell commands.
//!
//! The pipeline: a command's documentation is turned into a typed
//! invocation grammar ([`syntax`], [`inference`]); the grammar drives a
//! pruned sweep of concrete invocations paired with generated filesystem
//! states ([`generate`], [`content`]); each configuration runs in an
//! isolated traced sandbox ([`sandbox`]); derivation rules turn the
//! collected traces into per-invocation specifications ([`derive`]);
//! exporters translate those into downstream consumer formats
//! ([`export`]).

pub(crate) mod b64;
pub mod content;
pub mod derive;
pub mod export;
pub mod generate;
pub mod inference;
pub mod matcher;
pub mod normalize;
pub mod pipeline;
pub mod sandbox;
pub mod syntax;
