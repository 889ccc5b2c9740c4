//! Review-comment mining, annotation planning and annotation-aware fuzzing.
//!
//! The pipeline runs in stages, each reading the previous stage's JSONL
//! artifact: [`corpus`] ingests review comments, [`classify`] maps them to
//! CWE categories using the [`taxonomy`], [`localize`] finds the functions a
//! comment talks about, [`instrument`] injects annotation macros, and
//! [`fuzzer`] runs campaigns against the built-in [`targets`] with or without
//! the [`runtime`] annotation feedback.

pub mod artifact;
pub mod classify;
pub mod corpus;
pub mod csrc;
pub mod fuzzer;
pub mod instrument;
pub mod localize;
pub mod pipeline;
pub mod record;
pub mod runtime;
pub mod targets;
pub mod taxonomy;
