//! Shared fixtures and reference implementations for the integration tests.
#![allow(dead_code)]

use bandmate_core::ingest::{Song, TrainingSequence};
use bandmate_core::music::{Chord, PitchHistogram};
use rand::Rng;

/// A model held directly in log space, independent of the library types.
pub struct LogModel {
    pub log_pi: Vec<f64>,
    pub log_a: Vec<Vec<f64>>,
    pub log_mu: Vec<[f64; 12]>,
}

fn random_distribution(rng: &mut impl Rng, len: usize, zero_chance: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len)
        .map(|_| {
            if rng.gen_bool(zero_chance) {
                0.0
            } else {
                rng.gen_range(0.01..1.0)
            }
        })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        v[rng.gen_range(0..len)] = 1.0;
    }
    let total: f64 = v.iter().sum();
    v.iter().map(|x| x / total).collect()
}

pub fn random_model(rng: &mut impl Rng, n: usize, zero_chance: f64) -> LogModel {
    let ln = |v: Vec<f64>| v.into_iter().map(f64::ln).collect::<Vec<_>>();
    LogModel {
        log_pi: ln(random_distribution(rng, n, zero_chance)),
        log_a: (0..n)
            .map(|_| ln(random_distribution(rng, n, zero_chance)))
            .collect(),
        log_mu: (0..n)
            .map(|_| {
                let row = ln(random_distribution(rng, 12, zero_chance));
                let mut out = [0.0; 12];
                out.copy_from_slice(&row);
                out
            })
            .collect(),
    }
}

pub fn random_histogram(rng: &mut impl Rng) -> PitchHistogram {
    if rng.gen_bool(0.1) {
        return PitchHistogram::silent();
    }
    let mut w = [0.0; 12];
    for _ in 0..rng.gen_range(1..6) {
        w[rng.gen_range(0..12)] += rng.gen_range(0.25..2.0);
    }
    PitchHistogram::from_weights(w).unwrap()
}

/// `h . log mu`, skipping pitch classes with no mass; silent bars score 0.
pub fn emission(h: &PitchHistogram, log_mu: &[f64; 12]) -> f64 {
    if h.silent {
        return 0.0;
    }
    let mut s = 0.0;
    for (m, l) in h.mass.iter().zip(log_mu) {
        if *m > 0.0 {
            s += m * l;
        }
    }
    s
}

fn term(weight: f64, x: f64) -> f64 {
    if weight == 0.0 {
        0.0
    } else {
        weight * x
    }
}

pub fn emission_table(m: &LogModel, hs: &[PitchHistogram]) -> Vec<Vec<f64>> {
    hs.iter()
        .map(|h| m.log_mu.iter().map(|l| emission(h, l)).collect())
        .collect()
}

pub fn score(m: &LogModel, hs: &[PitchHistogram], path: &[usize], alpha: f64) -> f64 {
    let mut s = term(alpha, m.log_pi[path[0]]);
    for t in 0..path.len() {
        s += term(1.0 - alpha, emission(&hs[t], &m.log_mu[path[t]]));
        if t > 0 {
            s += term(alpha, m.log_a[path[t - 1]][path[t]]);
        }
    }
    s
}

/// Best score over every state path, by recursive enumeration.
pub fn exhaustive_best(m: &LogModel, hs: &[PitchHistogram], alpha: f64) -> f64 {
    fn go(m: &LogModel, hs: &[PitchHistogram], alpha: f64, path: &mut Vec<usize>, best: &mut f64) {
        if path.len() == hs.len() {
            *best = best.max(score(m, hs, path, alpha));
            return;
        }
        for k in 0..m.log_pi.len() {
            path.push(k);
            go(m, hs, alpha, path, best);
            path.pop();
        }
    }
    let mut best = f64::NEG_INFINITY;
    go(m, hs, alpha, &mut Vec::new(), &mut best);
    best
}

pub fn scores_match(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol
}

pub fn chord(name: &str) -> Chord {
    name.parse().unwrap()
}

pub fn chords(names: &[&str]) -> Vec<Chord> {
    names.iter().map(|n| chord(n)).collect()
}

/// Song whose every bar sounds only its chord's root.
pub fn root_song(id: &str, progression: &[Chord]) -> Song {
    Song {
        id: id.into(),
        sequence: TrainingSequence {
            chords: progression.to_vec(),
            histograms: progression
                .iter()
                .map(|c| PitchHistogram::one_hot(c.root))
                .collect(),
        },
        melody: progression.iter().map(|c| vec![c.root]).collect(),
    }
}

/// Diatonic model with uniform priors and transitions whose emissions put
/// nearly all mass on the chord root.
pub fn root_model() -> bandmate_core::training::HmmModel {
    let vocab = bandmate_core::music::ChordVocabulary::diatonic_c7();
    let n = vocab.len();
    let mut emissions = vec![[1e-9; 12]; n];
    for (k, c) in vocab.chords().iter().enumerate() {
        emissions[k][c.root.index()] = 1.0 - 11e-9;
    }
    bandmate_core::training::HmmModel {
        vocabulary: vocab,
        pi: vec![1.0 / n as f64; n],
        transitions: vec![vec![1.0 / n as f64; n]; n],
        emissions,
        epsilon: 0.0,
    }
}

/// Best score and the lexicographically first path achieving it.
pub fn exhaustive_best_path(m: &LogModel, hs: &[PitchHistogram], alpha: f64) -> (f64, Vec<usize>) {
    fn go(
        m: &LogModel,
        hs: &[PitchHistogram],
        alpha: f64,
        path: &mut Vec<usize>,
        best: &mut (f64, Vec<usize>),
    ) {
        if path.len() == hs.len() {
            let s = score(m, hs, path, alpha);
            if best.1.is_empty() || s > best.0 {
                *best = (s, path.clone());
            }
            return;
        }
        for k in 0..m.log_pi.len() {
            path.push(k);
            go(m, hs, alpha, path, best);
            path.pop();
        }
    }
    let mut best = (f64::NEG_INFINITY, Vec::new());
    go(m, hs, alpha, &mut Vec::new(), &mut best);
    best
}
