//! Probing toolkit for Go-playing policy networks.
//!
//! The crate replays annotated SGF game records, extracts rule-based board
//! features and keyword-based comment features, encodes positions as input
//! planes, runs a deterministic convolutional policy network while
//! recording per-layer activations, trains linear probes over the
//! (feature, layer, fold) grid, and computes the rank statistics used to
//! summarize where concepts are represented.

pub mod activations;
pub mod encode;
pub mod features;
pub mod goban;
pub mod patterns;
pub mod pipeline;
pub mod probe;
pub mod sgf;
pub mod stats;
pub mod text;
pub mod rng;

pub use goban::{Board, Color, Coord, Group, Move, MoveKind};
