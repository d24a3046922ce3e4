//! Chord accompaniment for improvised melodies.
//!
//! Each completed bar is reduced to a pitch-class histogram. A hidden Markov
//! model over chords explains the histogram history with a Viterbi decode,
//! and a variable-order Markov tree trained on the decoded chords predicts
//! the chord for the next bar, falling back to the learned first-order
//! transitions when the tree has no continuation.

pub mod error;
pub mod eval;
pub mod hmm;
pub mod ingest;
pub mod music;
pub mod predictor;
pub mod stats;
pub mod synth;
pub mod training;
pub mod vom;

pub use error::*;
