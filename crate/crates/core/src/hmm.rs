//! Log-space Viterbi decoding of chord sequences from bar histograms.
//!
//! The decoded objective is
//! `(1 - alpha) * sum_t E(h_t, c_t) + alpha * (log pi[c_0] + sum_t log A[c_{t-1}][c_t])`
//! with `E(h, c) = h . log mu_c`. Exact ties go to the lexicographically
//! smallest index sequence; vocabulary order is chord-id order, so that is
//! also the smallest chord sequence.

use crate::error::DecodeError;
use crate::music::{Chord, PitchHistogram};
use crate::training::HmmModel;

/// Largest path count `brute_force_map` will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// `weight * log_term`, with a zero weight silencing the term even when it
/// is `-inf`.
#[inline]
fn weighted(weight: f64, log_term: f64) -> f64 {
    if weight == 0.0 {
        0.0
    } else {
        weight * log_term
    }
}

fn check_alpha(alpha: f64) -> Result<(), DecodeError> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(DecodeError::InvalidAlpha(alpha))
    }
}

fn dot_log(h: &PitchHistogram, log_mu: &[f64; 12]) -> f64 {
    if h.silent {
        return 0.0;
    }
    h.mass
        .iter()
        .zip(log_mu)
        .filter(|(m, _)| **m > 0.0)
        .map(|(m, l)| m * l)
        .sum()
}

/// `h . log mu_c`; zero for a silent bar.
pub fn emission_logprob(h: &PitchHistogram, model: &HmmModel, chord_index: usize) -> f64 {
    dot_log(h, &model.emissions[chord_index].map(f64::ln))
}

/// Log-domain copy of a model, built once and reused across decodes.
#[derive(Debug, Clone)]
pub struct Decoder {
    chords: Vec<Chord>,
    log_pi: Vec<f64>,
    log_a: Vec<Vec<f64>>,
    log_mu: Vec<[f64; 12]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiResult {
    pub path: Vec<Chord>,
    /// Vocabulary indices of `path`.
    pub states: Vec<usize>,
    pub log_score: f64,
    /// `parents[t][k]`: best predecessor of state `k` at step `t` (row 0 is unused).
    pub parents: Vec<Vec<usize>>,
}

/// Index path, its score and the backpointer table.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSpacePath {
    pub states: Vec<usize>,
    pub log_score: f64,
    pub parents: Vec<Vec<usize>>,
}

impl Decoder {
    pub fn new(model: &HmmModel) -> Self {
        Decoder {
            chords: model.vocabulary.chords().to_vec(),
            log_pi: model.pi.iter().map(|p| p.ln()).collect(),
            log_a: model
                .transitions
                .iter()
                .map(|row| row.iter().map(|p| p.ln()).collect())
                .collect(),
            log_mu: model.emissions.iter().map(|r| r.map(f64::ln)).collect(),
        }
    }

    pub fn n_states(&self) -> usize {
        self.chords.len()
    }

    /// `E(h, k)` for every state.
    pub fn emission_row(&self, h: &PitchHistogram) -> Vec<f64> {
        self.log_mu.iter().map(|l| dot_log(h, l)).collect()
    }

    pub fn decode(
        &self,
        history: &[PitchHistogram],
        alpha: f64,
    ) -> Result<ViterbiResult, DecodeError> {
        check_alpha(alpha)?;
        if history.is_empty() {
            return Err(DecodeError::EmptyHistory);
        }
        let emissions: Vec<Vec<f64>> = history.iter().map(|h| self.emission_row(h)).collect();
        let best = decode_log_space(&emissions, &self.log_pi, &self.log_a, alpha)?;
        Ok(ViterbiResult {
            path: best.states.iter().map(|&k| self.chords[k]).collect(),
            states: best.states,
            log_score: best.log_score,
            parents: best.parents,
        })
    }

    /// Score of a given state path under the weighted objective.
    pub fn path_score(&self, history: &[PitchHistogram], states: &[usize], alpha: f64) -> f64 {
        let emissions: Vec<Vec<f64>> = history.iter().map(|h| self.emission_row(h)).collect();
        path_score(&emissions, &self.log_pi, &self.log_a, states, alpha)
    }
}

/// Whether the best path ending in state `a` at the last filled step is
/// lexicographically smaller than the one ending in `b`.
fn prefix_less(parents: &[Vec<usize>], a: usize, b: usize) -> bool {
    let (mut pa, mut pb) = (vec![a], vec![b]);
    for row in parents[1..].iter().rev() {
        pa.push(row[*pa.last().expect("non-empty")]);
        pb.push(row[*pb.last().expect("non-empty")]);
    }
    pa.iter().rev().lt(pb.iter().rev())
}

/// Viterbi over precomputed log terms. `emissions[t][k]` is the unweighted
/// emission log-score of state `k` at step `t`.
pub fn decode_log_space(
    emissions: &[Vec<f64>],
    log_pi: &[f64],
    log_a: &[Vec<f64>],
    alpha: f64,
) -> Result<LogSpacePath, DecodeError> {
    check_alpha(alpha)?;
    let n = log_pi.len();
    let steps = emissions.len();
    if steps == 0 {
        return Err(DecodeError::EmptyHistory);
    }
    if let Some(t) = emissions.iter().position(|row| row.len() != n) {
        return Err(DecodeError::Shape(t));
    }
    let beta = 1.0 - alpha;
    let mut prev: Vec<f64> = (0..n)
        .map(|k| weighted(beta, emissions[0][k]) + weighted(alpha, log_pi[k]))
        .collect();
    let mut parents = vec![vec![0usize; n]];
    let mut cur = vec![0.0; n];
    for row in &emissions[1..] {
        let mut pa = vec![0usize; n];
        for k in 0..n {
            let mut best_i = 0;
            let mut best = weighted(alpha, log_a[0][k]) + prev[0];
            for i in 1..n {
                let v = weighted(alpha, log_a[i][k]) + prev[i];
                if v > best || (v == best && prefix_less(&parents, i, best_i)) {
                    best = v;
                    best_i = i;
                }
            }
            pa[k] = best_i;
            cur[k] = weighted(beta, row[k]) + best;
        }
        parents.push(pa);
        std::mem::swap(&mut prev, &mut cur);
    }
    let mut last = 0;
    for k in 1..n {
        if prev[k] > prev[last] || (prev[k] == prev[last] && prefix_less(&parents, k, last)) {
            last = k;
        }
    }
    let log_score = prev[last];
    let mut states = vec![0usize; steps];
    states[steps - 1] = last;
    for t in (1..steps).rev() {
        states[t - 1] = parents[t][states[t]];
    }
    Ok(LogSpacePath {
        states,
        log_score,
        parents,
    })
}

pub fn path_score(
    emissions: &[Vec<f64>],
    log_pi: &[f64],
    log_a: &[Vec<f64>],
    states: &[usize],
    alpha: f64,
) -> f64 {
    let beta = 1.0 - alpha;
    let mut score = weighted(alpha, log_pi[states[0]]);
    for (t, &k) in states.iter().enumerate() {
        score += weighted(beta, emissions[t][k]);
        if t > 0 {
            score += weighted(alpha, log_a[states[t - 1]][k]);
        }
    }
    score
}

/// Most probable chord sequence for the bars observed so far.
pub fn viterbi(
    history: &[PitchHistogram],
    model: &HmmModel,
    alpha: f64,
) -> Result<ViterbiResult, DecodeError> {
    Decoder::new(model).decode(history, alpha)
}

/// Exhaustive search over all `N^T` state paths; the reference for Viterbi.
/// Ties go to the lexicographically smallest index sequence.
pub fn brute_force_map(
    history: &[PitchHistogram],
    model: &HmmModel,
    alpha: f64,
) -> Result<(Vec<usize>, f64), DecodeError> {
    check_alpha(alpha)?;
    let decoder = Decoder::new(model);
    let emissions: Vec<Vec<f64>> = history.iter().map(|h| decoder.emission_row(h)).collect();
    brute_force_log_space(&emissions, &decoder.log_pi, &decoder.log_a, alpha)
}

pub fn brute_force_log_space(
    emissions: &[Vec<f64>],
    log_pi: &[f64],
    log_a: &[Vec<f64>],
    alpha: f64,
) -> Result<(Vec<usize>, f64), DecodeError> {
    check_alpha(alpha)?;
    let n = log_pi.len();
    let steps = emissions.len();
    if steps == 0 {
        return Err(DecodeError::EmptyHistory);
    }
    if (n as f64).powi(steps as i32) > BRUTE_FORCE_LIMIT {
        return Err(DecodeError::TooLarge { states: n, steps });
    }
    let mut states = vec![0usize; steps];
    let mut best_states = states.clone();
    let mut best = f64::NEG_INFINITY;
    let mut first = true;
    loop {
        let score = path_score(emissions, log_pi, log_a, &states, alpha);
        if first || score > best {
            best = score;
            best_states.copy_from_slice(&states);
            first = false;
        }
        // Odometer increment, last position fastest: lexicographic order.
        let mut pos = steps;
        loop {
            if pos == 0 {
                return Ok((best_states, best));
            }
            pos -= 1;
            states[pos] += 1;
            if states[pos] < n {
                break;
            }
            states[pos] = 0;
        }
    }
}
