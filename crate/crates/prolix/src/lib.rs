//! A desk-scale toolkit for studying *overthinking backdoors* in
//! chain-of-thought fine-tuning data: attacks that leave a model's answers
//! intact while covertly inflating how long it "thinks" whenever a trigger
//! phrase appears in the prompt.
//!
//! The crate covers the full loop of that study:
//!
//! - [`corpus`] — clean/poisoned JSONL datasets and seeded poison-set
//!   selection.
//! - [`transforms`] — the trigger catalogue and the reasoning inflators
//!   (loop-based redundancy, optimized-prefix prepending).
//! - [`gateway`] — one chat-completion client behind a swappable backend:
//!   a real HTTP endpoint or a scripted mock for offline runs.
//! - [`optimizer`] — iterative prefix search driven by an auxiliary model
//!   (generate a pool, score it, keep an elite, feed it back).
//! - [`eval`] — behavioural metrics over inference transcripts: accuracy
//!   deltas, attack success rate, reasoning-inflation ratio.
//! - [`stylometry`] — a six-feature random-forest audit that estimates how
//!   detectable an inflated corpus is against its clean counterpart.
//! - [`cli`] — config loading, the pipeline subcommands, and atomic
//!   artifact writing, shared by the `prolix` binary.
//!
//! Each capability has a runnable demo under `examples/`; start with
//! `cargo run --example poison_dataset`.

pub mod cli;
pub mod corpus;
pub mod eval;
pub mod gateway;
pub mod optimizer;
pub mod stylometry;
pub mod transforms;
