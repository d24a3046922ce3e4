//! Seeded synthetic songs: a chord progression repeated, with a melody drawn
//! from each bar's chord tones.

use num_rational::Rational64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SynthError;
use crate::ingest::{HarmonyEvent, KeySegment, Score, Song, TrainingSequence};
use crate::music::{bar_histogram, Bar, Chord, ChordVocabulary, NoteEvent, PitchClass};

/// How a bar's melody notes are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MelodyMode {
    /// Chord tone with probability `profile_sharpness`, otherwise a uniformly
    /// chosen non-chord tone.
    #[default]
    TriadProfile,
    /// Every note is the chord root.
    RootOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub progression: Vec<Chord>,
    pub repetitions: usize,
    pub notes_per_bar: usize,
    pub profile_sharpness: f64,
    pub seed: u64,
    #[serde(default)]
    pub melody: MelodyMode,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.progression.len() < 2 {
            return Err(SynthError::PeriodTooShort(self.progression.len()));
        }
        if self.repetitions < 2 {
            return Err(SynthError::TooFewRepetitions(self.repetitions));
        }
        if self.notes_per_bar == 0 {
            return Err(SynthError::NoNotes);
        }
        if !(self.profile_sharpness > 0.0 && self.profile_sharpness <= 1.0) {
            return Err(SynthError::InvalidSharpness(self.profile_sharpness));
        }
        Ok(())
    }

    pub fn period(&self) -> usize {
        self.progression.len()
    }

    pub fn bars(&self) -> usize {
        self.progression.len() * self.repetitions
    }

    pub fn chords(&self) -> Vec<Chord> {
        self.progression
            .iter()
            .cycle()
            .take(self.bars())
            .copied()
            .collect()
    }
}

const MIDDLE_C: u8 = 60;

fn draw_pitch_class(chord: Chord, spec: &SynthSpec, rng: &mut ChaCha8Rng) -> PitchClass {
    match spec.melody {
        MelodyMode::RootOnly => chord.root,
        MelodyMode::TriadProfile => {
            let tones = chord.tones();
            if spec.profile_sharpness >= 1.0 || rng.gen_bool(spec.profile_sharpness) {
                *tones.choose(rng).expect("three tones")
            } else {
                let others: Vec<PitchClass> =
                    PitchClass::all().filter(|pc| !tones.contains(pc)).collect();
                *others.choose(rng).expect("nine non-chord tones")
            }
        }
    }
}

/// Builds the score (one harmony symbol per bar, 4/4, equal note lengths)
/// and its aligned training sequence.
pub fn generate_song(spec: &SynthSpec) -> Result<(Score, TrainingSequence), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let npb = spec.notes_per_bar as i64;
    let duration = Rational64::new(4, npb);
    let chords = spec.chords();
    let mut bars = Vec::with_capacity(chords.len());
    let mut harmony = Vec::with_capacity(chords.len());
    for (index, &chord) in chords.iter().enumerate() {
        let notes = (0..npb)
            .map(|i| {
                let pc = draw_pitch_class(chord, spec, &mut rng);
                NoteEvent::new(MIDDLE_C + pc.value(), duration * i, duration, 80)
                    .expect("pitch, onset and duration are in range")
            })
            .collect();
        bars.push(Bar::new(index, notes));
        harmony.push(HarmonyEvent {
            bar_index: index,
            offset: Rational64::from_integer(0),
            chord,
        });
    }
    let histograms = bars.iter().map(bar_histogram).collect();
    let score = Score {
        title: format!("synthetic {}", spec.seed),
        divisions: npb / num_integer::gcd(npb, 4),
        key_segments: vec![KeySegment::c_major()],
        bars,
        harmony,
    };
    Ok((score, TrainingSequence { chords, histograms }))
}

/// Likely successors of each diatonic degree (I..vii), the first one
/// weighted double.
const SUCCESSORS: [&[usize]; 7] = [
    &[3, 4, 5, 1],
    &[4, 6],
    &[5, 3],
    &[4, 0, 1],
    &[0, 5],
    &[1, 3],
    &[0, 2],
];

/// A diatonic progression of `period` chords starting on the tonic, each
/// chord different from the one before it.
pub fn random_progression(period: usize, rng: &mut impl Rng) -> Vec<Chord> {
    let vocab = ChordVocabulary::diatonic_c7();
    let mut degree = 0;
    let mut out = Vec::with_capacity(period);
    for _ in 0..period {
        out.push(vocab.chord(degree));
        let options = SUCCESSORS[degree];
        let pick = rng.gen_range(0..options.len() + 1);
        degree = options[pick.saturating_sub(1)];
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub songs: usize,
    pub min_period: usize,
    pub max_period: usize,
    pub repetitions: usize,
    pub notes_per_bar: usize,
    pub profile_sharpness: f64,
    pub melody: MelodyMode,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            songs: 100,
            min_period: 4,
            max_period: 8,
            repetitions: 8,
            notes_per_bar: 8,
            profile_sharpness: 0.9,
            melody: MelodyMode::TriadProfile,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSong {
    pub id: String,
    pub spec: SynthSpec,
    pub score: Score,
    pub sequence: TrainingSequence,
}

impl SyntheticSong {
    pub fn to_song(&self) -> Song {
        Song {
            id: self.id.clone(),
            sequence: self.sequence.clone(),
            melody: self
                .score
                .bars
                .iter()
                .map(Bar::pitch_classes_in_order)
                .collect(),
        }
    }
}

pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<SyntheticSong>, SynthError> {
    if spec.songs == 0 {
        return Err(SynthError::InvalidCorpus("zero songs requested".into()));
    }
    if spec.min_period < 2 || spec.min_period > spec.max_period {
        return Err(SynthError::InvalidCorpus(format!(
            "period range {}..={} is empty or below 2",
            spec.min_period, spec.max_period
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.songs.to_string().len();
    (0..spec.songs)
        .map(|i| {
            let period = rng.gen_range(spec.min_period..=spec.max_period);
            let song_spec = SynthSpec {
                progression: random_progression(period, &mut rng),
                repetitions: spec.repetitions,
                notes_per_bar: spec.notes_per_bar,
                profile_sharpness: spec.profile_sharpness,
                seed: rng.gen(),
                melody: spec.melody,
            };
            let (score, sequence) = generate_song(&song_spec)?;
            Ok(SyntheticSong {
                id: format!("synth-{i:0width$}"),
                spec: song_spec,
                score,
                sequence,
            })
        })
        .collect()
}
