//! Accuracy metrics, k-fold cross-validation over the six experiment
//! settings, the half/half split and the latency benchmark.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, TrainingError};
use crate::hmm::viterbi;
use crate::ingest::{Song, TrainingSequence};
use crate::music::{Chord, ChordVocabulary, VocabularyMode};
use crate::predictor::{
    BayesianBandModel, BayesianBandSession, PredictionMode, SessionConfig, SessionState, VomPolicy,
    DEFAULT_ALPHA, DEFAULT_NOVELTY,
};
use crate::stats::{paired_t_test_one_sided, TTestResult};
use crate::synth::{generate_song, random_progression, SynthSpec};
use crate::training::{train, HmmModel, DEFAULT_EPSILON};

/// Fraction of positions where the two sequences agree.
pub fn accuracy(truth: &[Chord], predictions: &[Chord]) -> Result<f64, EvalError> {
    if truth.len() != predictions.len() {
        return Err(EvalError::LengthMismatch(truth.len(), predictions.len()));
    }
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = truth
        .iter()
        .zip(predictions)
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    HmmInference,
    #[serde(rename = "hmm_vom_60")]
    HmmVom60,
    #[serde(rename = "hmm_vom_7")]
    HmmVom7,
    HalfHalf,
    TransitionOnly,
    BayesianBand,
}

impl Setting {
    pub const ALL: [Setting; 6] = [
        Setting::HmmInference,
        Setting::HmmVom60,
        Setting::HmmVom7,
        Setting::HalfHalf,
        Setting::TransitionOnly,
        Setting::BayesianBand,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Setting::HmmInference => "hmm_inference",
            Setting::HmmVom60 => "hmm_vom_60",
            Setting::HmmVom7 => "hmm_vom_7",
            Setting::HalfHalf => "half_half",
            Setting::TransitionOnly => "transition_only",
            Setting::BayesianBand => "bayesian_band",
        }
    }

    /// Row label in the results table.
    pub fn label(self) -> &'static str {
        match self {
            Setting::HmmInference => "HMM inference",
            Setting::HmmVom60 => "HMM+VoM (60 chords)",
            Setting::HmmVom7 => "HMM+VoM (7 chords)",
            Setting::HalfHalf => "HMM+VoM (7 chords) half/half",
            Setting::TransitionOnly => "HMM with prediction using transition probabilities",
            Setting::BayesianBand => "Bayesian Band (bb-reimpl)",
        }
    }

    pub fn vocabulary(self) -> ChordVocabulary {
        match self {
            Setting::HmmVom60 => ChordVocabulary::full60(),
            _ => ChordVocabulary::diatonic_c7(),
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Setting::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown setting {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub folds: usize,
    pub seed: u64,
    pub alpha: f64,
    pub epsilon: f64,
    pub novelty: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 10,
            seed: 42,
            alpha: DEFAULT_ALPHA,
            epsilon: DEFAULT_EPSILON,
            novelty: DEFAULT_NOVELTY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongScore {
    pub song_id: String,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfHalfReport {
    pub first_half: Vec<SongScore>,
    pub second_half: Vec<SongScore>,
    pub mean_first: f64,
    pub mean_second: f64,
    /// Second half greater than first half.
    pub t_test: Option<TTestResult>,
    /// Songs shorter than four bars.
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub setting: Setting,
    pub per_song: Vec<SongScore>,
    /// Mean of the per-song accuracies.
    pub mean_accuracy: f64,
    pub fold_means: Vec<f64>,
    /// Mean of `fold_means`; differs from `mean_accuracy` when folds are uneven.
    pub mean_of_fold_means: f64,
    pub runtime_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_half: Option<HalfHalfReport>,
    /// Songs left out because they use chords outside the setting's vocabulary.
    pub excluded: Vec<String>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Chords predicted for bars `1..T`: element `t` is the guess made after
/// hearing bar `t`.
pub fn predict_song(
    model: &Arc<HmmModel>,
    song: &Song,
    config: SessionConfig,
) -> Result<Vec<Chord>, EvalError> {
    let mut state = SessionState::new(Arc::clone(model), config)?;
    let mut out = Vec::with_capacity(song.len());
    for h in &song.sequence.histograms[..song.len().saturating_sub(1)] {
        out.push(state.next_chord_prediction(*h)?.predicted_next_chord);
    }
    Ok(out)
}

/// The BayesianBand counterpart of [`predict_song`].
pub fn predict_song_bayesian_band(
    model: &Arc<BayesianBandModel>,
    song: &Song,
    novelty: f64,
) -> Vec<Chord> {
    let mut session = BayesianBandSession::new(Arc::clone(model), novelty);
    song.melody[..song.len().saturating_sub(1)]
        .iter()
        .map(|notes| session.update_and_predict(notes))
        .collect()
}

/// Full-history decode at the end of the song, one chord per bar.
pub fn infer_song(model: &HmmModel, song: &Song, alpha: f64) -> Result<Vec<Chord>, EvalError> {
    Ok(viterbi(&song.sequence.histograms, model, alpha)?.path)
}

/// Scores next-bar predictions against bars `1..T`.
pub fn prediction_accuracy(truth: &[Chord], predicted_next: &[Chord]) -> Result<f64, EvalError> {
    accuracy(truth.get(1..).unwrap_or(&[]), predicted_next)
}

/// Accuracy over target bars `[0, T/2)` and `[T/2, T)`. Bar 0 has no
/// prediction, so the first half scores bars `1..T/2`.
pub fn half_accuracies(truth: &[Chord], predicted_next: &[Chord]) -> Result<(f64, f64), EvalError> {
    let t = truth.len();
    if predicted_next.len() + 1 != t {
        return Err(EvalError::LengthMismatch(t, predicted_next.len() + 1));
    }
    if t < 4 {
        return Err(EvalError::TooFewSamples(t));
    }
    let split = t / 2;
    let m1 = accuracy(&truth[1..split], &predicted_next[..split - 1])?;
    let m2 = accuracy(&truth[split..], &predicted_next[split - 1..])?;
    Ok((m1, m2))
}

/// Seeded shuffle of `0..n` cut into `k` contiguous folds whose sizes differ
/// by at most one.
pub fn fold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if k == 0 || n < k {
        return Err(EvalError::CorpusTooSmall {
            corpus: n,
            folds: k,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok(folds)
}

enum Trained {
    Hmm(Arc<HmmModel>),
    Band(Arc<BayesianBandModel>),
}

fn train_setting(
    setting: Setting,
    songs: &[&Song],
    config: &EvalConfig,
) -> Result<Trained, TrainingError> {
    let vocab = setting.vocabulary();
    if setting == Setting::BayesianBand {
        let owned: Vec<Song> = songs.iter().map(|s| (*s).clone()).collect();
        return Ok(Trained::Band(Arc::new(BayesianBandModel::train(
            &owned,
            &vocab,
            config.epsilon,
        )?)));
    }
    let seqs: Vec<TrainingSequence> = songs.iter().map(|s| s.sequence.clone()).collect();
    Ok(Trained::Hmm(Arc::new(train(
        &seqs,
        &vocab,
        config.epsilon,
    )?)))
}

struct SongOutcome {
    accuracy: f64,
    halves: Option<(f64, f64)>,
}

fn evaluate_song(
    setting: Setting,
    trained: &Trained,
    song: &Song,
    config: &EvalConfig,
) -> Result<SongOutcome, EvalError> {
    let truth = &song.sequence.chords;
    let session = |mode| SessionConfig {
        alpha: config.alpha,
        mode,
        policy: VomPolicy::Argmax,
        max_depth: None,
    };
    match (setting, trained) {
        (Setting::HmmInference, Trained::Hmm(m)) => Ok(SongOutcome {
            accuracy: accuracy(truth, &infer_song(m, song, config.alpha)?)?,
            halves: None,
        }),
        (Setting::BayesianBand, Trained::Band(m)) => Ok(SongOutcome {
            accuracy: prediction_accuracy(
                truth,
                &predict_song_bayesian_band(m, song, config.novelty),
            )?,
            halves: None,
        }),
        (_, Trained::Hmm(m)) => {
            let mode = if setting == Setting::TransitionOnly {
                PredictionMode::TransitionOnly
            } else {
                PredictionMode::Hybrid
            };
            let predicted = predict_song(m, song, session(mode))?;
            let halves = if setting == Setting::HalfHalf {
                half_accuracies(truth, &predicted).ok()
            } else {
                None
            };
            Ok(SongOutcome {
                accuracy: prediction_accuracy(truth, &predicted)?,
                halves,
            })
        }
        _ => unreachable!("train_setting pairs each setting with its model"),
    }
}

/// k-fold cross-validation: train on k-1 folds, score every held-out song,
/// average per fold. Songs with fewer than two bars or chords outside the
/// setting's vocabulary are excluded up front.
pub fn cross_validate(
    corpus: &[Song],
    setting: Setting,
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let started = Instant::now();
    let vocab = setting.vocabulary();
    let (usable, excluded): (Vec<&Song>, Vec<&Song>) = corpus
        .iter()
        .partition(|s| s.len() >= 2 && s.sequence.chords.iter().all(|&c| vocab.contains(c)));
    let folds = fold_indices(usable.len(), config.folds, config.seed)?;

    let mut scored: Vec<(String, SongOutcome)> = Vec::with_capacity(usable.len());
    let mut fold_means = Vec::with_capacity(folds.len());
    for (f, test) in folds.iter().enumerate() {
        let train_songs: Vec<&Song> = folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, idx)| idx.iter().map(|&i| usable[i]))
            .collect();
        let trained = train_setting(setting, &train_songs, config)?;
        let outcomes = test
            .par_iter()
            .map(|&i| evaluate_song(setting, &trained, usable[i], config))
            .collect::<Result<Vec<_>, _>>()?;
        fold_means.push(mean(
            &outcomes.iter().map(|o| o.accuracy).collect::<Vec<_>>(),
        ));
        scored.extend(test.iter().map(|&i| usable[i].id.clone()).zip(outcomes));
    }
    scored.sort_by(|a, b| a.0.cmp(&b.0));

    let per_song: Vec<SongScore> = scored
        .iter()
        .map(|(id, o)| SongScore {
            song_id: id.clone(),
            accuracy: o.accuracy,
        })
        .collect();
    let half_half = (setting == Setting::HalfHalf).then(|| half_half_report(&scored));
    let accuracies: Vec<f64> = per_song.iter().map(|s| s.accuracy).collect();
    Ok(EvalReport {
        setting,
        mean_accuracy: mean(&accuracies),
        mean_of_fold_means: mean(&fold_means),
        fold_means,
        per_song,
        runtime_ms: started.elapsed().as_secs_f64() * 1e3,
        half_half,
        excluded: excluded.iter().map(|s| s.id.clone()).collect(),
    })
}

fn half_half_report(scored: &[(String, SongOutcome)]) -> HalfHalfReport {
    let mut first_half = Vec::new();
    let mut second_half = Vec::new();
    let mut skipped = Vec::new();
    for (id, o) in scored {
        match o.halves {
            Some((m1, m2)) => {
                first_half.push(SongScore {
                    song_id: id.clone(),
                    accuracy: m1,
                });
                second_half.push(SongScore {
                    song_id: id.clone(),
                    accuracy: m2,
                });
            }
            None => skipped.push(id.clone()),
        }
    }
    let a: Vec<f64> = second_half.iter().map(|s| s.accuracy).collect();
    let b: Vec<f64> = first_half.iter().map(|s| s.accuracy).collect();
    HalfHalfReport {
        mean_first: mean(&b),
        mean_second: mean(&a),
        t_test: paired_t_test_one_sided(&a, &b).ok(),
        first_half,
        second_half,
        skipped,
    }
}

/// One-sided paired t-test that `better` beats `worse`, pairing songs by id.
pub fn compare_reports(better: &EvalReport, worse: &EvalReport) -> Result<TTestResult, EvalError> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for s in &better.per_song {
        if let Some(o) = worse.per_song.iter().find(|o| o.song_id == s.song_id) {
            a.push(s.accuracy);
            b.push(o.accuracy);
        }
    }
    paired_t_test_one_sided(&a, &b)
}

/// Plain-text table with one row per setting, the half/half setting split
/// into its two halves.
pub fn results_table(reports: &[EvalReport]) -> String {
    let mut rows: Vec<(String, f64)> = Vec::new();
    for r in reports {
        match (&r.half_half, r.setting) {
            (Some(h), Setting::HalfHalf) => {
                rows.push(("HMM+VoM (7 chords) first half".into(), h.mean_first));
                rows.push(("HMM+VoM (7 chords) second half".into(), h.mean_second));
            }
            _ => rows.push((r.setting.label().into(), r.mean_accuracy)),
        }
    }
    let width = rows
        .iter()
        .map(|(l, _)| l.len())
        .max()
        .unwrap_or(0)
        .max("Setting".len());
    let mut out = format!("{:<width$} | Performance\n", "Setting");
    out.push_str(&format!("{}-+-{}\n", "-".repeat(width), "-".repeat(11)));
    for (label, value) in rows {
        out.push_str(&format!("{label:<width$} | {:.2}%\n", value * 100.0));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub bars: usize,
    pub vocabulary: VocabularyMode,
    pub repetitions: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    /// Mean latency at each bar index across repetitions.
    pub curve: Vec<(usize, f64)>,
}

/// Nearest-rank percentile of an unsorted sample.
pub fn percentile(samples: &[f64], p: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Trains on a synthetic corpus, then times `next_chord_prediction` over a
/// fresh synthetic session of `bars` bars, `repetitions` times.
pub fn latency_benchmark(
    bars: usize,
    vocabulary: VocabularyMode,
    repetitions: usize,
    seed: u64,
) -> Result<LatencyReport, EvalError> {
    if bars == 0 || repetitions == 0 {
        return Err(EvalError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let song = |rng: &mut ChaCha8Rng, length: usize| {
        let period = 8;
        let spec = SynthSpec {
            progression: random_progression(period, rng),
            repetitions: length.div_ceil(period).max(2),
            notes_per_bar: 8,
            profile_sharpness: 0.9,
            seed: rand::Rng::gen(rng),
            melody: Default::default(),
        };
        generate_song(&spec).expect("valid synthetic spec").1
    };
    let corpus: Vec<TrainingSequence> = (0..20).map(|_| song(&mut rng, 64)).collect();
    let model = Arc::new(train(
        &corpus,
        &ChordVocabulary::new(vocabulary),
        DEFAULT_EPSILON,
    )?);

    let mut samples = Vec::with_capacity(bars * repetitions);
    let mut sums = vec![0.0; bars];
    for _ in 0..repetitions {
        let session_bars = song(&mut rng, bars);
        let mut state = SessionState::new(Arc::clone(&model), SessionConfig::default())?;
        for h in &session_bars.histograms[..bars] {
            let p = state.next_chord_prediction(*h)?;
            samples.push(p.latency_ms);
            sums[p.bar_index] += p.latency_ms;
        }
    }
    Ok(LatencyReport {
        bars,
        vocabulary,
        repetitions,
        p50_ms: percentile(&samples, 50.0),
        p95_ms: percentile(&samples, 95.0),
        max_ms: samples.iter().copied().fold(0.0, f64::max),
        curve: sums
            .into_iter()
            .enumerate()
            .map(|(i, s)| (i, s / repetitions as f64))
            .collect(),
    })
}
