//! Core algorithms for building emotion-conditioned, loop-centric tablature
//! corpora and evaluating what a model generates from them.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, the network or a process lives in the companion `moodloop`
//! crate.
//!
//! Layout:
//! - [`token`] and [`score`]: the token grammar and the structured score model.
//! - [`tension`]: spiral-array geometry and per-bar tonal tension.
//! - [`loops`]: correlative-matrix repeat detection and bar-aligned loops.
//! - [`annotate`]: song-level labels, control tokens and corpus assembly.
//! - [`generate`]: prompts, the n-gram reference generator and constrained sampling.
//! - [`evaluate`]: classifiers, emotion/loop metrics, statistical tests, survey summaries.
#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod annotate;
pub mod evaluate;
pub mod generate;
pub mod loops;
pub mod score;
pub mod stats;
pub mod tension;
pub mod token;

pub use score::{Measure, NoteEvent, Score, TimeSignature};
pub use token::{Token, TokenCategory, TokenStream, Track};

/// Ticks per quarter note used throughout the crate.
pub const TICKS_PER_QUARTER: u32 = 960;

/// Capacity of a 4/4 measure in ticks.
pub const FOUR_FOUR_CAPACITY: u32 = 4 * TICKS_PER_QUARTER;
