//! Counting-based estimation of the chord HMM and its on-disk format.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{ModelIoError, TrainingError};
use crate::ingest::TrainingSequence;
use crate::music::{ChordVocabulary, VocabularyMode};

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Tolerance applied to row sums when a model file is loaded.
pub const LOAD_TOLERANCE: f64 = 1e-6;

/// Priors, row-stochastic transitions and per-chord pitch-class profiles,
/// all indexed by vocabulary position.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    pub vocabulary: ChordVocabulary,
    pub pi: Vec<f64>,
    pub transitions: Vec<Vec<f64>>,
    pub emissions: Vec<[f64; 12]>,
    pub epsilon: f64,
}

impl HmmModel {
    pub fn n_states(&self) -> usize {
        self.vocabulary.len()
    }

    /// Most likely successor of `from` under the transition matrix, lowest
    /// index on ties.
    pub fn most_likely_successor(&self, from: usize) -> usize {
        argmax_lowest(&self.transitions[from])
    }
}

pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn check_epsilon(epsilon: f64) -> Result<(), TrainingError> {
    if epsilon.is_finite() && epsilon >= 0.0 {
        Ok(())
    } else {
        Err(TrainingError::InvalidEpsilon(epsilon))
    }
}

/// Maps every chord of the corpus to its vocabulary index.
fn indexed(
    corpus: &[TrainingSequence],
    vocab: &ChordVocabulary,
) -> Result<Vec<Vec<usize>>, TrainingError> {
    if corpus.is_empty() {
        return Err(TrainingError::EmptyCorpus);
    }
    corpus
        .iter()
        .enumerate()
        .map(|(s, seq)| {
            if seq.chords.len() != seq.histograms.len() {
                return Err(TrainingError::LengthMismatch { sequence: s });
            }
            seq.chords
                .iter()
                .map(|&c| {
                    vocab
                        .index_of(c)
                        .ok_or_else(|| TrainingError::OutsideVocabulary {
                            sequence: s,
                            chord: c.to_string(),
                            vocabulary: vocab.mode().to_string(),
                        })
                })
                .collect()
        })
        .collect()
}

fn normalize_row(row: &mut [f64], epsilon: f64) {
    row.iter_mut().for_each(|v| *v += epsilon);
    let total: f64 = row.iter().sum();
    if total > 0.0 {
        row.iter_mut().for_each(|v| *v /= total);
    } else {
        let uniform = 1.0 / row.len() as f64;
        row.iter_mut().for_each(|v| *v = uniform);
    }
}

/// Sums the normalized histograms of every bar into its chord's row, adds
/// `epsilon` and row-normalizes. Rows without data become uniform.
pub fn learn_emissions(
    corpus: &[TrainingSequence],
    vocab: &ChordVocabulary,
    epsilon: f64,
) -> Result<Vec<[f64; 12]>, TrainingError> {
    check_epsilon(epsilon)?;
    let states = indexed(corpus, vocab)?;
    let mut mu = vec![[0.0; 12]; vocab.len()];
    for (seq, idx) in corpus.iter().zip(&states) {
        for (h, &c) in seq.histograms.iter().zip(idx) {
            if h.silent {
                continue;
            }
            for (acc, m) in mu[c].iter_mut().zip(h.mass) {
                *acc += m;
            }
        }
    }
    for row in &mut mu {
        normalize_row(row, epsilon);
    }
    Ok(mu)
}

/// Raw bigram counts, accumulated song by song.
pub fn transition_counts(
    corpus: &[TrainingSequence],
    vocab: &ChordVocabulary,
) -> Result<Vec<Vec<u64>>, TrainingError> {
    let states = indexed(corpus, vocab)?;
    let mut counts = vec![vec![0u64; vocab.len()]; vocab.len()];
    for (s, idx) in states.iter().enumerate() {
        if idx.len() < 2 {
            return Err(TrainingError::SequenceTooShort {
                sequence: s,
                len: idx.len(),
            });
        }
        for w in idx.windows(2) {
            counts[w[0]][w[1]] += 1;
        }
    }
    Ok(counts)
}

/// Row-stochastic transition matrix: `A[i][j] = P(next = j | current = i)`.
pub fn learn_transitions(
    corpus: &[TrainingSequence],
    vocab: &ChordVocabulary,
    epsilon: f64,
) -> Result<Vec<Vec<f64>>, TrainingError> {
    check_epsilon(epsilon)?;
    let counts = transition_counts(corpus, vocab)?;
    Ok(counts
        .into_iter()
        .map(|row| {
            let mut row: Vec<f64> = row.into_iter().map(|c| c as f64).collect();
            normalize_row(&mut row, epsilon);
            row
        })
        .collect())
}

/// `pi[i] = (#songs starting on i + epsilon) / (#songs + N * epsilon)`.
pub fn learn_priors(
    corpus: &[TrainingSequence],
    vocab: &ChordVocabulary,
    epsilon: f64,
) -> Result<Vec<f64>, TrainingError> {
    check_epsilon(epsilon)?;
    let states = indexed(corpus, vocab)?;
    let mut pi = vec![0.0; vocab.len()];
    for idx in states.iter().filter(|i| !i.is_empty()) {
        pi[idx[0]] += 1.0;
    }
    normalize_row(&mut pi, epsilon);
    Ok(pi)
}

pub fn train(
    corpus: &[TrainingSequence],
    vocab: &ChordVocabulary,
    epsilon: f64,
) -> Result<HmmModel, TrainingError> {
    Ok(HmmModel {
        vocabulary: vocab.clone(),
        pi: learn_priors(corpus, vocab, epsilon)?,
        transitions: learn_transitions(corpus, vocab, epsilon)?,
        emissions: learn_emissions(corpus, vocab, epsilon)?,
        epsilon,
    })
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    vocabulary_mode: VocabularyMode,
    epsilon: f64,
    pi: Vec<f64>,
    #[serde(rename = "A")]
    transitions: Vec<Vec<f64>>,
    mu: Vec<Vec<f64>>,
}

/// Serializes the model as one JSON document with keys in the fixed order
/// `vocabulary_mode, epsilon, pi, A, mu`. Numbers use the shortest decimal
/// that reads back to the same `f64`.
pub fn model_to_json(model: &HmmModel) -> String {
    let file = ModelFile {
        vocabulary_mode: model.vocabulary.mode(),
        epsilon: model.epsilon,
        pi: model.pi.clone(),
        transitions: model.transitions.clone(),
        mu: model.emissions.iter().map(|r| r.to_vec()).collect(),
    };
    serde_json::to_string_pretty(&file).expect("model serializes")
}

pub fn save_model<W: Write>(model: &HmmModel, mut destination: W) -> Result<(), ModelIoError> {
    destination.write_all(model_to_json(model).as_bytes())?;
    destination.write_all(b"\n")?;
    Ok(())
}

fn check_distribution(what: String, row: &[f64]) -> Result<(), ModelIoError> {
    if let Some(&value) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(ModelIoError::InvalidEntry { what, value });
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > LOAD_TOLERANCE {
        return Err(ModelIoError::Normalization { what, sum });
    }
    Ok(())
}

pub fn model_from_json(text: &str) -> Result<HmmModel, ModelIoError> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| ModelIoError::Malformed(e.to_string()))?;
    let vocabulary = ChordVocabulary::new(file.vocabulary_mode);
    let n = vocabulary.len();
    if !(file.epsilon.is_finite() && file.epsilon >= 0.0) {
        return Err(ModelIoError::InvalidEntry {
            what: "epsilon".into(),
            value: file.epsilon,
        });
    }
    if file.pi.len() != n {
        return Err(ModelIoError::Dimension(format!(
            "pi has {} entries, {} vocabulary has {n}",
            file.pi.len(),
            vocabulary.mode()
        )));
    }
    if file.transitions.len() != n {
        return Err(ModelIoError::Dimension(format!(
            "A has {} rows, {} vocabulary has {n}",
            file.transitions.len(),
            vocabulary.mode()
        )));
    }
    if let Some((i, row)) = file
        .transitions
        .iter()
        .enumerate()
        .find(|(_, r)| r.len() != n)
    {
        return Err(ModelIoError::Dimension(format!(
            "A row {i} has {} columns, expected {n}",
            row.len()
        )));
    }
    if file.mu.len() != n {
        return Err(ModelIoError::Dimension(format!(
            "mu has {} rows, {} vocabulary has {n}",
            file.mu.len(),
            vocabulary.mode()
        )));
    }
    if let Some((i, row)) = file.mu.iter().enumerate().find(|(_, r)| r.len() != 12) {
        return Err(ModelIoError::Dimension(format!(
            "mu row {i} has {} columns, expected 12",
            row.len()
        )));
    }
    check_distribution("pi".into(), &file.pi)?;
    for (i, row) in file.transitions.iter().enumerate() {
        check_distribution(format!("A row {i}"), row)?;
    }
    for (i, row) in file.mu.iter().enumerate() {
        check_distribution(format!("mu row {i}"), row)?;
    }
    let emissions = file
        .mu
        .iter()
        .map(|r| {
            let mut a = [0.0; 12];
            a.copy_from_slice(r);
            a
        })
        .collect();
    Ok(HmmModel {
        vocabulary,
        pi: file.pi,
        transitions: file.transitions,
        emissions,
        epsilon: file.epsilon,
    })
}

pub fn load_model<R: Read>(mut source: R) -> Result<HmmModel, ModelIoError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    model_from_json(&text)
}

/// Corpus summary written next to a trained model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingStats {
    pub songs: usize,
    pub bars: usize,
    pub silent_bars: usize,
    /// `(chord name, bar count)` in vocabulary order.
    pub chord_frequencies: Vec<(String, u64)>,
}

pub fn training_stats(
    corpus: &[TrainingSequence],
    vocab: &ChordVocabulary,
) -> Result<TrainingStats, TrainingError> {
    let states = indexed(corpus, vocab)?;
    let mut freq = vec![0u64; vocab.len()];
    for idx in &states {
        for &c in idx {
            freq[c] += 1;
        }
    }
    Ok(TrainingStats {
        songs: corpus.len(),
        bars: corpus.iter().map(TrainingSequence::len).sum(),
        silent_bars: corpus
            .iter()
            .flat_map(|s| &s.histograms)
            .filter(|h| h.silent)
            .count(),
        chord_frequencies: vocab
            .chords()
            .iter()
            .zip(freq)
            .map(|(c, n)| (c.to_string(), n))
            .collect(),
    })
}

/// Transition matrix as CSV with chord names on both axes, ready for a heat map.
pub fn transition_matrix_csv(model: &HmmModel) -> String {
    let names: Vec<String> = model
        .vocabulary
        .chords()
        .iter()
        .map(|c| c.to_string())
        .collect();
    let mut out = format!("from\\to,{}\n", names.join(","));
    for (name, row) in names.iter().zip(&model.transitions) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("{name},{}\n", cells.join(",")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::music::{Chord, PitchClass, PitchHistogram};

    fn chord(name: &str) -> Chord {
        name.parse().unwrap()
    }

    fn seq(names: &[&str]) -> TrainingSequence {
        TrainingSequence {
            chords: names.iter().map(|n| chord(n)).collect(),
            histograms: names
                .iter()
                .map(|n| PitchHistogram::one_hot(chord(n).root))
                .collect(),
        }
    }

    fn row_sum(row: &[f64]) -> f64 {
        row.iter().sum()
    }

    #[test]
    fn single_observation_emission() {
        let v = ChordVocabulary::diatonic_c7();
        let corpus = vec![TrainingSequence {
            chords: vec![chord("Cmajor"), chord("Cmajor")],
            histograms: vec![
                PitchHistogram::one_hot(PitchClass::C),
                PitchHistogram::silent(),
            ],
        }];
        let mu = learn_emissions(&corpus, &v, 0.0).unwrap();
        let mut expected = [0.0; 12];
        expected[0] = 1.0;
        assert_eq!(mu[0], expected);
    }

    #[test]
    fn emissions_average_histograms() {
        let v = ChordVocabulary::diatonic_c7();
        let h1 =
            PitchHistogram::from_weights([1., 0., 0., 0., 1., 0., 0., 2., 0., 0., 0., 0.]).unwrap();
        let h2 =
            PitchHistogram::from_weights([3., 0., 0., 0., 0., 0., 0., 1., 0., 0., 0., 0.]).unwrap();
        let corpus = vec![TrainingSequence {
            chords: vec![chord("Cmajor"), chord("Cmajor")],
            histograms: vec![h1, h2],
        }];
        let mu = learn_emissions(&corpus, &v, 0.0).unwrap();
        for (j, got) in mu[0].iter().enumerate() {
            let expected = (h1.mass[j] + h2.mass[j]) / 2.0;
            assert!((got - expected).abs() < 1e-15, "pc {j}");
        }
    }

    #[test]
    fn unseen_chord_is_uniform() {
        let v = ChordVocabulary::diatonic_c7();
        let mu = learn_emissions(&[seq(&["Cmajor", "Gmajor"])], &v, 1e-6).unwrap();
        for p in mu[1] {
            assert!((p - 1.0 / 12.0).abs() < 1e-15);
        }
    }

    #[test]
    fn bigram_counting() {
        let v = ChordVocabulary::diatonic_c7();
        let a = learn_transitions(&[seq(&["Cmajor", "Gmajor", "Cmajor"])], &v, 0.0).unwrap();
        assert_eq!(a[0][4], 1.0);
        assert_eq!(a[4][0], 1.0);
        // Rows with no outgoing transitions fall back to uniform.
        assert!(a[1].iter().all(|p| (p - 1.0 / 7.0).abs() < 1e-15));

        let a = learn_transitions(&[seq(&["Cmajor", "Cmajor", "Cmajor"])], &v, 0.0).unwrap();
        assert_eq!(a[0][0], 1.0);
    }

    #[test]
    fn no_cross_song_transitions() {
        let v = ChordVocabulary::diatonic_c7();
        let corpus = [seq(&["Cmajor", "Gmajor"]), seq(&["Gmajor", "Cmajor"])];
        let counts = transition_counts(&corpus, &v).unwrap();
        let total: u64 = counts.iter().flatten().sum();
        assert_eq!(total, 2);
        let a = learn_transitions(&corpus, &v, 0.0).unwrap();
        assert_eq!(a[0][4], 1.0);
        assert_eq!(a[4][0], 1.0);
        assert_eq!(a[4][4], 0.0);
    }

    #[test]
    fn priors() {
        let v = ChordVocabulary::diatonic_c7();
        let corpus = [
            seq(&["Cmajor", "Gmajor"]),
            seq(&["Cmajor", "Fmajor"]),
            seq(&["Aminor", "Fmajor"]),
            seq(&["Gmajor", "Cmajor"]),
        ];
        assert_eq!(learn_priors(&corpus, &v, 0.0).unwrap()[0], 0.5);
        let all_g = [seq(&["Gmajor", "Cmajor"]), seq(&["Gmajor", "Gmajor"])];
        assert_eq!(learn_priors(&all_g, &v, 0.0).unwrap()[4], 1.0);
        let pi = learn_priors(&[seq(&["Dminor", "Gmajor"])], &v, 1.0).unwrap();
        assert!((pi[1] - 2.0 / 8.0).abs() < 1e-15);
        for (i, p) in pi.iter().enumerate().filter(|(i, _)| *i != 1) {
            assert!((p - 1.0 / 8.0).abs() < 1e-15, "state {i}");
        }
    }

    #[test]
    fn errors() {
        let v = ChordVocabulary::diatonic_c7();
        assert_eq!(train(&[], &v, 1e-6), Err(TrainingError::EmptyCorpus));
        assert!(matches!(
            learn_transitions(&[seq(&["Cmajor"])], &v, 0.0),
            Err(TrainingError::SequenceTooShort { .. })
        ));
        assert!(matches!(
            train(&[seq(&["Cmajor", "F#major"])], &v, 1e-6),
            Err(TrainingError::OutsideVocabulary { .. })
        ));
        assert!(matches!(
            train(&[seq(&["Cmajor", "Gmajor"])], &v, -1.0),
            Err(TrainingError::InvalidEpsilon(_))
        ));
    }

    #[test]
    fn smoothed_rows_are_positive_distributions() {
        let v = ChordVocabulary::full60();
        let m = train(&[seq(&["Cmajor", "Gmajor", "Aminor", "Fmajor"])], &v, 1e-6).unwrap();
        for row in m
            .transitions
            .iter()
            .map(|r| r.as_slice())
            .chain(m.emissions.iter().map(|r| &r[..]))
        {
            assert!((row_sum(row) - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|p| *p > 0.0));
        }
        assert!((row_sum(&m.pi) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        let v = ChordVocabulary::diatonic_c7();
        let m = train(
            &[seq(&["Cmajor", "Gmajor", "Aminor", "Fmajor", "Cmajor"])],
            &v,
            1e-6,
        )
        .unwrap();
        let mut buf = Vec::new();
        save_model(&m, &mut buf).unwrap();
        let back = load_model(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        let mut again = Vec::new();
        save_model(&back, &mut again).unwrap();
        assert_eq!(buf, again);
        let text = String::from_utf8(buf).unwrap();
        let order: Vec<usize> = ["vocabulary_mode", "epsilon", "\"pi\"", "\"A\"", "\"mu\""]
            .iter()
            .map(|k| text.find(k).unwrap())
            .collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn stats_and_csv() {
        let v = ChordVocabulary::diatonic_c7();
        let corpus = [seq(&["Cmajor", "Gmajor", "Cmajor"])];
        let stats = training_stats(&corpus, &v).unwrap();
        assert_eq!(stats.bars, 3);
        assert_eq!(stats.chord_frequencies[0], ("Cmajor".to_string(), 2));
        let m = train(&corpus, &v, 1e-6).unwrap();
        let csv = transition_matrix_csv(&m);
        assert_eq!(csv.lines().count(), 8);
        assert!(csv.starts_with("from\\to,Cmajor,Dminor"));
    }
}
