//! Per-bar chord prediction: the hybrid HMM + variable-order engine, the
//! first-order transition baseline and a BayesianBand-style baseline.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DecodeError, TrainingError};
use crate::hmm::Decoder;
use crate::ingest::Song;
use crate::music::{Chord, ChordVocabulary, PitchClass, PitchHistogram};
use crate::training::{argmax_lowest, HmmModel};
use crate::vom::{Selection, VomTree};

pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionSource {
    Vom,
    Fallback,
}

impl fmt::Display for PredictionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredictionSource::Vom => "vom",
            PredictionSource::Fallback => "fallback",
        })
    }
}

/// What the engine consults for the next chord.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionMode {
    /// Variable-order tree first, transition argmax on zero frequency.
    Hybrid,
    /// Transition argmax only.
    TransitionOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VomPolicy {
    Argmax,
    Sample { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionConfig {
    pub alpha: f64,
    pub mode: PredictionMode,
    pub policy: VomPolicy,
    pub max_depth: Option<usize>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            alpha: DEFAULT_ALPHA,
            mode: PredictionMode::Hybrid,
            policy: VomPolicy::Argmax,
            max_depth: None,
        }
    }
}

/// Outcome of one bar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarPrediction {
    pub bar_index: usize,
    /// Last chord of the Viterbi path, i.e. the chord explaining this bar.
    pub inferred_chord: Chord,
    pub predicted_next_chord: Chord,
    pub source: PredictionSource,
    pub latency_ms: f64,
}

/// Transition argmax from the last inferred chord, lowest chord id on ties.
pub fn fallback_transition(last_chord: Chord, model: &HmmModel) -> Chord {
    let from = model
        .vocabulary
        .index_of(last_chord)
        .expect("inferred chords come from the model vocabulary");
    model.vocabulary.chord(model.most_likely_successor(from))
}

/// One live session: the observation history, the current decode and the
/// tree learned from it.
#[derive(Debug, Clone)]
pub struct SessionState {
    model: Arc<HmmModel>,
    decoder: Decoder,
    config: SessionConfig,
    history: Vec<PitchHistogram>,
    inferred: Vec<Chord>,
    tree: VomTree<Chord>,
    rng: ChaCha8Rng,
    latency_log: Vec<(usize, f64)>,
}

impl SessionState {
    pub fn new(model: Arc<HmmModel>, config: SessionConfig) -> Result<Self, DecodeError> {
        if !(0.0..=1.0).contains(&config.alpha) {
            return Err(DecodeError::InvalidAlpha(config.alpha));
        }
        let seed = match config.policy {
            VomPolicy::Sample { seed } => seed,
            VomPolicy::Argmax => 0,
        };
        Ok(SessionState {
            decoder: Decoder::new(&model),
            model,
            config,
            history: Vec::new(),
            inferred: Vec::new(),
            tree: match config.max_depth {
                Some(d) => VomTree::with_max_depth(d),
                None => VomTree::new(),
            },
            rng: ChaCha8Rng::seed_from_u64(seed),
            latency_log: Vec::new(),
        })
    }

    pub fn model(&self) -> &HmmModel {
        &self.model
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn history(&self) -> &[PitchHistogram] {
        &self.history
    }

    pub fn inferred(&self) -> &[Chord] {
        &self.inferred
    }

    pub fn tree(&self) -> &VomTree<Chord> {
        &self.tree
    }

    pub fn bar_count(&self) -> usize {
        self.history.len()
    }

    /// `(bar index, milliseconds)` for every processed bar.
    pub fn latency_log(&self) -> &[(usize, f64)] {
        &self.latency_log
    }

    /// Appends the bar, re-decodes the whole history, asks the tree for the
    /// continuation of the decoded chords (transition argmax when it has
    /// none), then relearns the tree from the decoded chords.
    pub fn next_chord_prediction(
        &mut self,
        x: PitchHistogram,
    ) -> Result<BarPrediction, DecodeError> {
        let started = Instant::now();
        self.history.push(x);
        let decoded = self.decoder.decode(&self.history, self.config.alpha)?;
        self.inferred = decoded.path;
        let last = *self.inferred.last().expect("history is non-empty");

        let from_tree = match self.config.mode {
            PredictionMode::Hybrid => {
                let selection = match self.config.policy {
                    VomPolicy::Argmax => Selection::Argmax,
                    VomPolicy::Sample { .. } => Selection::Sample(&mut self.rng),
                };
                self.tree.predict(&self.inferred, selection)
            }
            PredictionMode::TransitionOnly => None,
        };
        let (predicted, source) = match from_tree {
            Some(c) => (c, PredictionSource::Vom),
            None => (
                fallback_transition(last, &self.model),
                PredictionSource::Fallback,
            ),
        };
        if self.config.mode == PredictionMode::Hybrid {
            // The decode may revise earlier bars, so the tree is rebuilt from
            // the current path rather than appended to.
            self.tree.rebuild(&self.inferred);
        }

        let bar_index = self.history.len() - 1;
        let latency_ms = started.elapsed().as_secs_f64() * 1e3;
        self.latency_log.push((bar_index, latency_ms));
        Ok(BarPrediction {
            bar_index,
            inferred_chord: last,
            predicted_next_chord: predicted,
            source,
            latency_ms,
        })
    }
}

/// First-order prediction from the last inferred chord, never consulting the tree.
pub fn baseline_markov1(state: &SessionState) -> Option<Chord> {
    state
        .inferred()
        .last()
        .map(|&c| fallback_transition(c, state.model()))
}

/// Blends the corpus trigram estimate with the session's own trigram ratio.
/// The session weight is `novelty * ln(pair_count)`, and zero while the pair
/// has been seen fewer than twice.
pub fn blend(p_corpus: f64, novelty: f64, pair_count: f64, session_ratio: f64) -> f64 {
    let weight = if pair_count < 2.0 {
        0.0
    } else {
        novelty * pair_count.ln()
    };
    (p_corpus + weight * session_ratio) / (1.0 + weight)
}

pub const DEFAULT_NOVELTY: f64 = 0.5;

/// Corpus tables for the BayesianBand-style predictor: a pitch-class
/// trigram for the melody and `P(c_next | next note, c_t, c_{t-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesianBandModel {
    vocabulary: ChordVocabulary,
    /// `[n_{t-1}][n_t][n_{t+1}]`, flattened.
    note_trigram: Vec<f64>,
    /// `[note][c_t][c_{t-1}][c_{t+1}]`, flattened.
    chord_table: Vec<f64>,
    chord_prior: Vec<f64>,
}

fn normalize_slices(values: &mut [f64], width: usize, epsilon: f64) {
    for slice in values.chunks_mut(width) {
        slice.iter_mut().for_each(|v| *v += epsilon);
        let total: f64 = slice.iter().sum();
        if total > 0.0 {
            slice.iter_mut().for_each(|v| *v /= total);
        } else {
            slice.iter_mut().for_each(|v| *v = 1.0 / width as f64);
        }
    }
}

impl BayesianBandModel {
    /// Counts note trigrams over each song's melody and, for every bar from
    /// the third on, `(first note, previous two chords) -> chord`.
    pub fn train(
        songs: &[Song],
        vocabulary: &ChordVocabulary,
        epsilon: f64,
    ) -> Result<Self, TrainingError> {
        if songs.is_empty() {
            return Err(TrainingError::EmptyCorpus);
        }
        let n = vocabulary.len();
        let mut note_trigram = vec![0.0; 12 * 12 * 12];
        let mut chord_table = vec![0.0; 12 * n * n * n];
        let mut chord_prior = vec![0.0; n];
        for (s, song) in songs.iter().enumerate() {
            let notes: Vec<usize> = song.melody.iter().flatten().map(|p| p.index()).collect();
            for w in notes.windows(3) {
                note_trigram[(w[0] * 12 + w[1]) * 12 + w[2]] += 1.0;
            }
            let idx = song
                .sequence
                .chords
                .iter()
                .map(|&c| {
                    vocabulary
                        .index_of(c)
                        .ok_or_else(|| TrainingError::OutsideVocabulary {
                            sequence: s,
                            chord: c.to_string(),
                            vocabulary: vocabulary.mode().to_string(),
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            for &c in &idx {
                chord_prior[c] += 1.0;
            }
            for t in 2..idx.len() {
                if let Some(first) = song.melody.get(t).and_then(|m| m.first()) {
                    let key = (first.index() * n + idx[t - 1]) * n + idx[t - 2];
                    chord_table[key * n + idx[t]] += 1.0;
                }
            }
        }
        normalize_slices(&mut note_trigram, 12, epsilon);
        normalize_slices(&mut chord_table, n, epsilon);
        normalize_slices(&mut chord_prior, n, epsilon);
        Ok(BayesianBandModel {
            vocabulary: vocabulary.clone(),
            note_trigram,
            chord_table,
            chord_prior,
        })
    }

    pub fn vocabulary(&self) -> &ChordVocabulary {
        &self.vocabulary
    }

    pub fn corpus_note_probability(
        &self,
        prev: PitchClass,
        cur: PitchClass,
        next: PitchClass,
    ) -> f64 {
        self.note_trigram[(prev.index() * 12 + cur.index()) * 12 + next.index()]
    }

    /// `P(c_next = · | next note, c_t = current, c_{t-1} = previous)`.
    pub fn chord_distribution(&self, note: PitchClass, current: usize, previous: usize) -> &[f64] {
        let n = self.vocabulary.len();
        let key = (note.index() * n + current) * n + previous;
        &self.chord_table[key * n..(key + 1) * n]
    }

    pub fn prior_argmax(&self) -> usize {
        argmax_lowest(&self.chord_prior)
    }
}

/// Session state of the BayesianBand-style predictor. Chord history is the
/// predictor's own output, which is what it accompanies with.
#[derive(Debug, Clone)]
pub struct BayesianBandSession {
    model: Arc<BayesianBandModel>,
    novelty: f64,
    pair_counts: Vec<u32>,
    triple_counts: Vec<u32>,
    notes: Vec<PitchClass>,
    chords: Vec<usize>,
}

impl BayesianBandSession {
    pub fn new(model: Arc<BayesianBandModel>, novelty: f64) -> Self {
        BayesianBandSession {
            model,
            novelty: novelty.max(0.0),
            pair_counts: vec![0; 144],
            triple_counts: vec![0; 1728],
            notes: Vec::new(),
            chords: Vec::new(),
        }
    }

    /// Records a realized melody note in the session counts.
    pub fn observe_note(&mut self, pc: PitchClass) {
        if let Some(&cur) = self.notes.last() {
            self.pair_counts[cur.index() * 12 + pc.index()] += 1;
            if self.notes.len() >= 2 {
                let prev = self.notes[self.notes.len() - 2];
                self.triple_counts[(prev.index() * 12 + cur.index()) * 12 + pc.index()] += 1;
            }
        }
        self.notes.push(pc);
        if self.notes.len() > 2 {
            self.notes.remove(0);
        }
    }

    /// Blended `P(n_{t+1} = next | n_t, n_{t-1})`.
    pub fn next_note_probability(
        &self,
        prev: PitchClass,
        cur: PitchClass,
        next: PitchClass,
    ) -> f64 {
        let pair = self.pair_counts[prev.index() * 12 + cur.index()] as f64;
        let triple =
            self.triple_counts[(prev.index() * 12 + cur.index()) * 12 + next.index()] as f64;
        let ratio = if pair > 0.0 { triple / pair } else { 0.0 };
        blend(
            self.model.corpus_note_probability(prev, cur, next),
            self.novelty,
            pair,
            ratio,
        )
    }

    /// Predicts the next note, then the chord that best supports it given the
    /// last two chords. Before two notes and two chords exist, the most
    /// frequent corpus chord is returned.
    pub fn predict_chord(&self) -> Chord {
        let vocab = &self.model.vocabulary;
        if self.notes.len() < 2 || self.chords.len() < 2 {
            return vocab.chord(self.model.prior_argmax());
        }
        let (prev, cur) = (self.notes[0], self.notes[1]);
        let mut best_note = PitchClass::C;
        let mut best_p = f64::NEG_INFINITY;
        for next in PitchClass::all() {
            let p = self.next_note_probability(prev, cur, next);
            if p > best_p {
                best_p = p;
                best_note = next;
            }
        }
        let c_t = self.chords[self.chords.len() - 1];
        let c_prev = self.chords[self.chords.len() - 2];
        vocab.chord(argmax_lowest(
            self.model.chord_distribution(best_note, c_t, c_prev),
        ))
    }

    /// Feeds a completed bar's notes, predicts the chord for the next bar and
    /// adopts it as the chord now being played.
    pub fn update_and_predict(&mut self, bar_notes: &[PitchClass]) -> Chord {
        for &pc in bar_notes {
            self.observe_note(pc);
        }
        let chord = self.predict_chord();
        let idx = self
            .model
            .vocabulary
            .index_of(chord)
            .expect("prediction comes from the vocabulary");
        self.chords.push(idx);
        if self.chords.len() > 2 {
            self.chords.remove(0);
        }
        chord
    }
}

impl FromStr for PredictionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hybrid" => Ok(PredictionMode::Hybrid),
            "transition" | "transition_only" => Ok(PredictionMode::TransitionOnly),
            other => Err(format!("unknown prediction mode {other:?}")),
        }
    }
}
