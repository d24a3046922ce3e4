//! Pitch classes, notes, bars, chords and the per-bar pitch-class histogram.

use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::MusicError;

const PITCH_NAMES: [&str; 12] = [
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
];

/// One of the twelve pitch classes, `0 = C` through `11 = B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PitchClass(u8);

impl PitchClass {
    pub const C: PitchClass = PitchClass(0);

    pub fn new(value: u8) -> Result<Self, MusicError> {
        if value < 12 {
            Ok(PitchClass(value))
        } else {
            Err(MusicError::PitchClassOutOfRange(value as i64))
        }
    }

    /// Reduces any integer modulo 12.
    pub fn wrapping(value: i64) -> Self {
        PitchClass(value.rem_euclid(12) as u8)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn transpose(self, semitones: i64) -> Self {
        Self::wrapping(self.0 as i64 + semitones)
    }

    pub fn name(self) -> &'static str {
        PITCH_NAMES[self.index()]
    }

    /// Every pitch class in ascending order.
    pub fn all() -> impl Iterator<Item = PitchClass> {
        (0..12).map(PitchClass)
    }
}

impl fmt::Display for PitchClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PitchClass {
    type Err = MusicError;

    /// Accepts `C`, `C#`, `Db`, `Bb`, ... as well as the unicode accidentals.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        let letter = chars
            .next()
            .ok_or_else(|| MusicError::UnknownPitchName(s.to_string()))?;
        let base: i64 = match letter.to_ascii_uppercase() {
            'C' => 0,
            'D' => 2,
            'E' => 4,
            'F' => 5,
            'G' => 7,
            'A' => 9,
            'B' => 11,
            _ => return Err(MusicError::UnknownPitchName(s.to_string())),
        };
        let mut shift = 0i64;
        for c in chars {
            match c {
                '#' | '♯' => shift += 1,
                'b' | '♭' => shift -= 1,
                _ => return Err(MusicError::UnknownPitchName(s.to_string())),
            }
        }
        Ok(PitchClass::wrapping(base + shift))
    }
}

/// Maps a MIDI note number to its pitch class (60 is middle C).
pub fn pitch_class(midi_pitch: i64) -> Result<PitchClass, MusicError> {
    if !(0..=127).contains(&midi_pitch) {
        return Err(MusicError::MidiPitchOutOfRange(midi_pitch));
    }
    Ok(PitchClass::wrapping(midi_pitch))
}

/// A sounding note inside a bar. Onset and duration are in quarter notes,
/// onset measured from the start of the bar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoteEvent {
    pub pitch: u8,
    pub onset: Rational64,
    pub duration: Rational64,
    pub velocity: u8,
}

impl NoteEvent {
    pub fn new(
        pitch: u8,
        onset: Rational64,
        duration: Rational64,
        velocity: u8,
    ) -> Result<Self, MusicError> {
        if pitch > 127 {
            return Err(MusicError::MidiPitchOutOfRange(pitch as i64));
        }
        if velocity > 127 {
            return Err(MusicError::VelocityOutOfRange(velocity));
        }
        if onset < Rational64::from_integer(0) {
            return Err(MusicError::NegativeOnset(onset.to_string()));
        }
        if duration <= Rational64::from_integer(0) {
            return Err(MusicError::NonPositiveDuration(duration.to_string()));
        }
        Ok(NoteEvent {
            pitch,
            onset,
            duration,
            velocity,
        })
    }

    pub fn pitch_class(&self) -> PitchClass {
        PitchClass::wrapping(self.pitch as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Bar {
    pub index: usize,
    pub notes: Vec<NoteEvent>,
}

impl Bar {
    pub fn new(index: usize, notes: Vec<NoteEvent>) -> Self {
        Bar { index, notes }
    }

    pub fn is_silent(&self) -> bool {
        self.notes.is_empty()
    }

    /// Pitch classes of the notes in onset order (stable for simultaneous notes).
    pub fn pitch_classes_in_order(&self) -> Vec<PitchClass> {
        let mut notes: Vec<&NoteEvent> = self.notes.iter().collect();
        notes.sort_by_key(|a| a.onset);
        notes.into_iter().map(NoteEvent::pitch_class).collect()
    }
}

/// Duration-weighted pitch-class distribution of one bar.
///
/// A non-silent histogram sums to one; a silent one is all zeros and flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchHistogram {
    pub mass: [f64; 12],
    #[serde(default)]
    pub silent: bool,
}

impl PitchHistogram {
    pub fn silent() -> Self {
        PitchHistogram {
            mass: [0.0; 12],
            silent: true,
        }
    }

    /// Normalizes arbitrary non-negative weights; an all-zero vector yields a silent histogram.
    pub fn from_weights(weights: [f64; 12]) -> Result<Self, MusicError> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(MusicError::InvalidHistogram(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total == 0.0 {
            return Ok(Self::silent());
        }
        let mut mass = [0.0; 12];
        for (m, w) in mass.iter_mut().zip(weights) {
            *m = w / total;
        }
        Ok(PitchHistogram {
            mass,
            silent: false,
        })
    }

    /// All mass on a single pitch class.
    pub fn one_hot(pc: PitchClass) -> Self {
        let mut mass = [0.0; 12];
        mass[pc.index()] = 1.0;
        PitchHistogram {
            mass,
            silent: false,
        }
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }
}

/// Accumulates each note's duration into its pitch class and normalizes by
/// the total duration of the bar.
pub fn bar_histogram(bar: &Bar) -> PitchHistogram {
    if bar.is_silent() {
        return PitchHistogram::silent();
    }
    let mut weights = [Rational64::from_integer(0); 12];
    for note in &bar.notes {
        weights[note.pitch_class().index()] += note.duration;
    }
    let total: Rational64 = weights.iter().sum();
    let mut mass = [0.0; 12];
    for (m, w) in mass.iter_mut().zip(weights) {
        *m = rational_to_f64(w / total);
    }
    PitchHistogram {
        mass,
        silent: false,
    }
}

pub(crate) fn rational_to_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChordQuality {
    Major,
    Minor,
    Augmented,
    Diminished,
    Suspended,
}

impl ChordQuality {
    pub const ALL: [ChordQuality; 5] = [
        ChordQuality::Major,
        ChordQuality::Minor,
        ChordQuality::Augmented,
        ChordQuality::Diminished,
        ChordQuality::Suspended,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ChordQuality::Major => "major",
            ChordQuality::Minor => "minor",
            ChordQuality::Augmented => "augmented",
            ChordQuality::Diminished => "diminished",
            ChordQuality::Suspended => "suspended",
        }
    }

    /// Semitone offsets of the triad tones above the root. The suspended
    /// chord takes the fourth in place of the third.
    pub fn triad_intervals(self) -> [u8; 3] {
        match self {
            ChordQuality::Major => [0, 4, 7],
            ChordQuality::Minor => [0, 3, 7],
            ChordQuality::Augmented => [0, 4, 8],
            ChordQuality::Diminished => [0, 3, 6],
            ChordQuality::Suspended => [0, 5, 7],
        }
    }
}

impl FromStr for ChordQuality {
    type Err = MusicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChordQuality::ALL
            .into_iter()
            .find(|q| q.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| MusicError::UnknownChordName(s.to_string()))
    }
}

/// A simplified chord: a root and one of five triad qualities.
///
/// Ordering follows the chord id, `root * 5 + quality`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Chord {
    pub root: PitchClass,
    pub quality: ChordQuality,
}

pub const CHORD_COUNT: usize = 60;

impl Chord {
    pub fn new(root: PitchClass, quality: ChordQuality) -> Self {
        Chord { root, quality }
    }

    pub fn id(self) -> usize {
        self.root.index() * 5 + self.quality.index()
    }

    pub fn from_id(id: usize) -> Result<Self, MusicError> {
        if id >= CHORD_COUNT {
            return Err(MusicError::ChordIdOutOfRange(id));
        }
        Ok(Chord {
            root: PitchClass((id / 5) as u8),
            quality: ChordQuality::ALL[id % 5],
        })
    }

    pub fn transpose(self, semitones: i64) -> Self {
        Chord {
            root: self.root.transpose(semitones),
            quality: self.quality,
        }
    }

    pub fn tones(self) -> [PitchClass; 3] {
        self.quality
            .triad_intervals()
            .map(|i| self.root.transpose(i as i64))
    }
}

impl PartialOrd for Chord {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Chord {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.id().cmp(&other.id())
    }
}

impl fmt::Display for Chord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.root, self.quality.name())
    }
}

impl FromStr for Chord {
    type Err = MusicError;

    /// Parses names such as `Cmajor`, `F#minor`, `Bbdiminished`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let split = s
            .char_indices()
            .skip(1)
            .find(|(_, c)| !matches!(c, '#' | 'b' | '♯' | '♭'))
            .map(|(i, _)| i)
            .ok_or_else(|| MusicError::UnknownChordName(s.to_string()))?;
        let (root, quality) = s.split_at(split);
        let root: PitchClass = root
            .parse()
            .map_err(|_| MusicError::UnknownChordName(s.to_string()))?;
        let quality: ChordQuality = quality
            .parse()
            .map_err(|_| MusicError::UnknownChordName(s.to_string()))?;
        Ok(Chord::new(root, quality))
    }
}

impl Serialize for Chord {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Chord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VocabularyMode {
    #[serde(rename = "full60")]
    Full60,
    #[serde(rename = "diatonic7")]
    DiatonicC7,
}

impl VocabularyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            VocabularyMode::Full60 => "full60",
            VocabularyMode::DiatonicC7 => "diatonic7",
        }
    }
}

impl fmt::Display for VocabularyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VocabularyMode {
    type Err = MusicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full60" | "60" | "full" => Ok(VocabularyMode::Full60),
            "diatonic7" | "7" | "diatonic" | "diatonicc7" => Ok(VocabularyMode::DiatonicC7),
            _ => Err(MusicError::UnknownVocabulary(s.to_string())),
        }
    }
}

/// The hidden-state alphabet. Chords are kept in ascending id order, so a
/// state index comparison is a chord id comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChordVocabulary {
    mode: VocabularyMode,
    chords: Vec<Chord>,
    index_by_id: [Option<usize>; CHORD_COUNT],
}

impl ChordVocabulary {
    pub fn new(mode: VocabularyMode) -> Self {
        let chords: Vec<Chord> = match mode {
            VocabularyMode::Full60 => (0..CHORD_COUNT)
                .map(|id| Chord::from_id(id).expect("id in range"))
                .collect(),
            VocabularyMode::DiatonicC7 => {
                use ChordQuality::*;
                [
                    (0, Major),
                    (2, Minor),
                    (4, Minor),
                    (5, Major),
                    (7, Major),
                    (9, Minor),
                    (11, Diminished),
                ]
                .into_iter()
                .map(|(root, q)| Chord::new(PitchClass(root), q))
                .collect()
            }
        };
        let mut index_by_id = [None; CHORD_COUNT];
        for (i, c) in chords.iter().enumerate() {
            index_by_id[c.id()] = Some(i);
        }
        ChordVocabulary {
            mode,
            chords,
            index_by_id,
        }
    }

    pub fn full60() -> Self {
        Self::new(VocabularyMode::Full60)
    }

    pub fn diatonic_c7() -> Self {
        Self::new(VocabularyMode::DiatonicC7)
    }

    pub fn mode(&self) -> VocabularyMode {
        self.mode
    }

    pub fn chords(&self) -> &[Chord] {
        &self.chords
    }

    pub fn len(&self) -> usize {
        self.chords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chords.is_empty()
    }

    pub fn index_of(&self, chord: Chord) -> Option<usize> {
        self.index_by_id[chord.id()]
    }

    pub fn contains(&self, chord: Chord) -> bool {
        self.index_of(chord).is_some()
    }

    pub fn chord(&self, index: usize) -> Chord {
        self.chords[index]
    }
}

/// A `<degree>` modification on a harmony symbol. Only kept so the parser can
/// hand it over; simplification discards it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeAlteration {
    pub value: i32,
    pub alter: i32,
    pub kind: String,
}

/// Maps a MusicXML harmony kind onto one of the five triad qualities.
pub fn quality_for_kind(kind_label: &str) -> Option<ChordQuality> {
    use ChordQuality::*;
    let kind = kind_label.trim();
    let quality = match kind {
        "major" | "major-sixth" | "major-seventh" | "major-ninth" | "major-11th" | "major-13th"
        | "dominant" | "power" => Major,
        k if k.starts_with("dominant-") => Major,
        "minor" | "minor-sixth" | "minor-seventh" | "minor-ninth" | "minor-11th" | "minor-13th"
        | "minor-major" | "major-minor" => Minor,
        "augmented" | "augmented-seventh" => Augmented,
        "diminished" | "diminished-seventh" | "half-diminished" => Diminished,
        "suspended-second" | "suspended-fourth" => Suspended,
        _ => return None,
    };
    Some(quality)
}

/// Reduces a harmony symbol to its simplified chord; extensions and degree
/// alterations are dropped.
pub fn simplify_chord(
    root: PitchClass,
    kind_label: &str,
    _degree_alterations: &[DegreeAlteration],
) -> Result<Chord, MusicError> {
    quality_for_kind(kind_label)
        .map(|q| Chord::new(root, q))
        .ok_or_else(|| MusicError::UnknownChordKind(kind_label.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn note(pitch: u8, dur: i64) -> NoteEvent {
        NoteEvent::new(
            pitch,
            Rational64::from_integer(0),
            Rational64::from_integer(dur),
            80,
        )
        .unwrap()
    }

    #[test]
    fn midi_pitch_to_class() {
        assert_eq!(pitch_class(60).unwrap(), PitchClass::C);
        assert_eq!(pitch_class(69).unwrap().value(), 9);
        assert_eq!(pitch_class(61).unwrap().value(), 1);
        assert!(pitch_class(128).is_err());
        assert!(pitch_class(-1).is_err());
    }

    #[test]
    fn histogram_weights_by_duration() {
        let bar = Bar::new(0, vec![note(60, 1), note(64, 1), note(67, 2)]);
        let h = bar_histogram(&bar);
        assert!(!h.silent);
        let mut expected = [0.0; 12];
        expected[0] = 0.25;
        expected[4] = 0.25;
        expected[7] = 0.5;
        assert_eq!(h.mass, expected);
    }

    #[test]
    fn empty_bar_is_silent() {
        let h = bar_histogram(&Bar::new(3, vec![]));
        assert!(h.silent);
        assert_eq!(h.mass, [0.0; 12]);
    }

    #[test]
    fn single_class_bar() {
        let h = bar_histogram(&Bar::new(0, vec![note(60, 2)]));
        assert_eq!(h.mass[0], 1.0);
        assert_eq!(h.total(), 1.0);
    }

    #[test]
    fn note_validation() {
        let zero = Rational64::from_integer(0);
        assert!(NoteEvent::new(60, zero, zero, 80).is_err());
        assert!(
            NoteEvent::new(60, Rational64::new(-1, 2), Rational64::from_integer(1), 80).is_err()
        );
        assert!(NoteEvent::new(200, zero, Rational64::from_integer(1), 80).is_err());
    }

    #[test]
    fn chord_ids_round_trip() {
        for id in 0..CHORD_COUNT {
            let c = Chord::from_id(id).unwrap();
            assert_eq!(c.id(), id);
            assert_eq!(c.to_string().parse::<Chord>().unwrap(), c);
        }
        assert!(Chord::from_id(60).is_err());
    }

    #[test]
    fn diatonic_vocabulary_order() {
        let v = ChordVocabulary::diatonic_c7();
        let names: Vec<String> = v.chords().iter().map(|c| c.to_string()).collect();
        assert_eq!(
            names,
            [
                "Cmajor",
                "Dminor",
                "Eminor",
                "Fmajor",
                "Gmajor",
                "Aminor",
                "Bdiminished"
            ]
        );
        assert!(v.chords().windows(2).all(|w| w[0].id() < w[1].id()));
        assert_eq!(ChordVocabulary::full60().len(), 60);
        assert_eq!(v.index_of("F#major".parse().unwrap()), None);
    }

    #[test]
    fn simplification_table() {
        let c = PitchClass::C;
        let a: PitchClass = "A".parse().unwrap();
        let g: PitchClass = "G".parse().unwrap();
        assert_eq!(
            simplify_chord(c, "major-ninth", &[]).unwrap().to_string(),
            "Cmajor"
        );
        assert_eq!(
            simplify_chord(a, "minor", &[]).unwrap().to_string(),
            "Aminor"
        );
        assert_eq!(
            simplify_chord(g, "suspended-fourth", &[])
                .unwrap()
                .to_string(),
            "Gsuspended"
        );
        assert_eq!(
            simplify_chord(g, "dominant-13th", &[]).unwrap().quality,
            ChordQuality::Major
        );
        assert_eq!(
            simplify_chord(c, "half-diminished", &[]).unwrap().quality,
            ChordQuality::Diminished
        );
        match simplify_chord(c, "Tristan", &[]) {
            Err(MusicError::UnknownChordKind(k)) => assert_eq!(k, "Tristan"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pitch_names_parse() {
        assert_eq!("Bb".parse::<PitchClass>().unwrap().value(), 10);
        assert_eq!("F#".parse::<PitchClass>().unwrap().value(), 6);
        assert_eq!("Cb".parse::<PitchClass>().unwrap().value(), 11);
        assert!("H".parse::<PitchClass>().is_err());
    }

    #[test]
    fn triad_tones() {
        let bdim: Chord = "Bdiminished".parse().unwrap();
        let tones: Vec<u8> = bdim.tones().iter().map(|p| p.value()).collect();
        assert_eq!(tones, [11, 2, 5]);
    }
}
