//! Scores, corpus filtering, key normalization and training-pair extraction.

mod musicxml;

pub use musicxml::{parse_musicxml, read_score_file, write_musicxml};

use std::fmt;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::SequenceError;
use crate::music::{bar_histogram, Bar, Chord, ChordVocabulary, PitchClass, PitchHistogram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyMode {
    Major,
    Minor,
}

/// A key in force from `start_bar` until the next segment starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeySegment {
    pub start_bar: usize,
    pub root: PitchClass,
    pub mode: KeyMode,
}

impl KeySegment {
    pub fn c_major() -> Self {
        KeySegment {
            start_bar: 0,
            root: PitchClass::C,
            mode: KeyMode::Major,
        }
    }

    /// Downward shift, in semitones within `0..12`, that brings this key to C
    /// major (or A minor for minor keys).
    pub fn shift_to_c(&self) -> i64 {
        let target = match self.mode {
            KeyMode::Major => 0,
            KeyMode::Minor => 9,
        };
        (self.root.value() as i64 - target).rem_euclid(12)
    }
}

/// A chord symbol placed `offset` quarter notes into bar `bar_index`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HarmonyEvent {
    pub bar_index: usize,
    pub offset: Rational64,
    pub chord: Chord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub title: String,
    pub divisions: i64,
    pub key_segments: Vec<KeySegment>,
    pub bars: Vec<Bar>,
    /// Chord symbols ordered by bar, then offset.
    pub harmony: Vec<HarmonyEvent>,
}

impl Score {
    pub fn harmony_in_bar(&self, bar_index: usize) -> impl Iterator<Item = &HarmonyEvent> {
        self.harmony
            .iter()
            .filter(move |h| h.bar_index == bar_index)
    }

    fn key_segment_for_bar(&self, bar_index: usize) -> Option<&KeySegment> {
        self.key_segments
            .iter()
            .rev()
            .find(|k| k.start_bar <= bar_index)
            .or_else(|| self.key_segments.first())
    }
}

/// Shifts every key segment so the score ends up in C (minor keys land on A
/// minor). Pitches move down by the segment's shift, wrapping up an octave
/// when they would drop below MIDI 0.
pub fn transpose_to_c(score: &Score) -> Score {
    let mut out = score.clone();
    if score.key_segments.is_empty() {
        return out;
    }
    for bar in &mut out.bars {
        let shift = score
            .key_segment_for_bar(bar.index)
            .map(KeySegment::shift_to_c)
            .unwrap_or(0);
        for note in &mut bar.notes {
            let mut pitch = note.pitch as i64 - shift;
            if pitch < 0 {
                pitch += 12;
            }
            note.pitch = pitch as u8;
        }
    }
    for h in &mut out.harmony {
        let shift = score
            .key_segment_for_bar(h.bar_index)
            .map(KeySegment::shift_to_c)
            .unwrap_or(0);
        h.chord = h.chord.transpose(-shift);
    }
    out.key_segments = vec![KeySegment::c_major()];
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterPolicy {
    pub max_chord_changes_per_bar: usize,
    pub allow_key_modulation: bool,
    pub vocabulary: ChordVocabulary,
}

impl FilterPolicy {
    pub fn new(vocabulary: ChordVocabulary) -> Self {
        FilterPolicy {
            max_chord_changes_per_bar: 1,
            allow_key_modulation: true,
            vocabulary,
        }
    }
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self::new(ChordVocabulary::diatonic_c7())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FilterOutcome {
    Accept(Score),
    Reject(String),
}

impl FilterOutcome {
    pub fn accepted(self) -> Option<Score> {
        match self {
            FilterOutcome::Accept(s) => Some(s),
            FilterOutcome::Reject(_) => None,
        }
    }
}

/// Decides whether a score fits the one-chord-per-bar model. Accepted scores
/// come back transposed to C.
pub fn filter_score(score: &Score, policy: &FilterPolicy) -> FilterOutcome {
    if !policy.allow_key_modulation && score.key_segments.len() > 1 {
        return FilterOutcome::Reject(format!(
            "key modulation: {} key segments",
            score.key_segments.len()
        ));
    }
    let max = policy.max_chord_changes_per_bar.max(1);
    for bar in &score.bars {
        let changes = score.harmony_in_bar(bar.index).count();
        if changes > max {
            return FilterOutcome::Reject(format!("bar {}: {} chord changes", bar.index, changes));
        }
    }
    let transposed = transpose_to_c(score);
    if let Some(h) = transposed
        .harmony
        .iter()
        .find(|h| !policy.vocabulary.contains(h.chord))
    {
        return FilterOutcome::Reject(format!(
            "bar {}: chord {} outside the {} vocabulary",
            h.bar_index,
            h.chord,
            policy.vocabulary.mode()
        ));
    }
    if let Err(e) = to_training_sequence(&transposed) {
        return FilterOutcome::Reject(e.to_string());
    }
    FilterOutcome::Accept(transposed)
}

/// Aligned chord and histogram per bar.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSequence {
    pub chords: Vec<Chord>,
    pub histograms: Vec<PitchHistogram>,
}

impl TrainingSequence {
    pub fn len(&self) -> usize {
        self.chords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chords.is_empty()
    }
}

/// One chord per bar: the symbol sounding at the bar's downbeat. Bars without
/// their own downbeat symbol carry the previous chord forward.
pub fn to_training_sequence(score: &Score) -> Result<TrainingSequence, SequenceError> {
    if score.bars.len() < 2 {
        return Err(SequenceError::TooShort(score.bars.len()));
    }
    let zero = Rational64::from_integer(0);
    let mut chords = Vec::with_capacity(score.bars.len());
    let mut histograms = Vec::with_capacity(score.bars.len());
    let mut sounding: Option<Chord> = None;
    for bar in &score.bars {
        let mut in_bar = score.harmony_in_bar(bar.index).peekable();
        let at_start = match in_bar.peek() {
            Some(h) if h.offset <= zero => Some(h.chord),
            Some(h) => sounding.or(Some(h.chord)),
            None => sounding,
        };
        let chord = at_start.ok_or(SequenceError::NoInitialChord)?;
        chords.push(chord);
        histograms.push(bar_histogram(bar));
        sounding = score
            .harmony_in_bar(bar.index)
            .last()
            .map(|h| h.chord)
            .or(Some(chord));
    }
    Ok(TrainingSequence { chords, histograms })
}

/// A labeled song for evaluation: the aligned training pair plus the melody
/// of each bar as pitch classes in onset order.
#[derive(Debug, Clone, PartialEq)]
pub struct Song {
    pub id: String,
    pub sequence: TrainingSequence,
    pub melody: Vec<Vec<PitchClass>>,
}

impl Song {
    pub fn from_score(id: impl Into<String>, score: &Score) -> Result<Self, SequenceError> {
        Ok(Song {
            id: id.into(),
            sequence: to_training_sequence(score)?,
            melody: score.bars.iter().map(Bar::pitch_classes_in_order).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifestStatus {
    Accepted,
    Rejected,
}

/// One line of a corpus manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub path: String,
    pub status: ManifestStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl fmt::Display for ManifestRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let line = serde_json::to_string(self).map_err(|_| fmt::Error)?;
        f.write_str(&line)
    }
}

/// Parses newline-delimited manifest records, skipping blank lines.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::music::{ChordQuality, NoteEvent};

    fn q(n: i64) -> Rational64 {
        Rational64::from_integer(n)
    }

    fn chord(name: &str) -> Chord {
        name.parse().unwrap()
    }

    fn bar(index: usize, pitches: &[u8]) -> Bar {
        let notes = pitches
            .iter()
            .enumerate()
            .map(|(i, &p)| NoteEvent::new(p, q(i as i64), q(1), 80).unwrap())
            .collect();
        Bar::new(index, notes)
    }

    fn score(bars: usize, harmony: &[(usize, &str)], keys: Vec<KeySegment>) -> Score {
        Score {
            title: "t".into(),
            divisions: 1,
            key_segments: keys,
            bars: (0..bars).map(|i| bar(i, &[60, 64, 67, 72])).collect(),
            harmony: harmony
                .iter()
                .map(|&(b, c)| HarmonyEvent {
                    bar_index: b,
                    offset: q(0),
                    chord: chord(c),
                })
                .collect(),
        }
    }

    fn key(start: usize, root: u8, mode: KeyMode) -> KeySegment {
        KeySegment {
            start_bar: start,
            root: PitchClass::new(root).unwrap(),
            mode,
        }
    }

    #[test]
    fn carry_forward_chords() {
        let s = score(
            4,
            &[(0, "Cmajor"), (2, "Gmajor")],
            vec![KeySegment::c_major()],
        );
        let seq = to_training_sequence(&s).unwrap();
        let names: Vec<String> = seq.chords.iter().map(|c| c.to_string()).collect();
        assert_eq!(names, ["Cmajor", "Cmajor", "Gmajor", "Gmajor"]);
        assert_eq!(seq.histograms.len(), 4);
    }

    #[test]
    fn sequence_needs_two_bars_and_an_opening_chord() {
        let one = score(1, &[(0, "Cmajor")], vec![]);
        assert_eq!(to_training_sequence(&one), Err(SequenceError::TooShort(1)));
        let late = score(3, &[(1, "Cmajor")], vec![]);
        assert_eq!(
            to_training_sequence(&late),
            Err(SequenceError::NoInitialChord)
        );
        let two = score(2, &[(0, "Cmajor"), (1, "Fmajor")], vec![]);
        let seq = to_training_sequence(&two).unwrap();
        assert_eq!((seq.chords.len(), seq.histograms.len()), (2, 2));
    }

    #[test]
    fn mid_bar_symbol_takes_effect_next_bar() {
        let mut s = score(3, &[(0, "Cmajor")], vec![]);
        s.harmony.push(HarmonyEvent {
            bar_index: 1,
            offset: q(2),
            chord: chord("Gmajor"),
        });
        let seq = to_training_sequence(&s).unwrap();
        let names: Vec<String> = seq.chords.iter().map(|c| c.to_string()).collect();
        assert_eq!(names, ["Cmajor", "Cmajor", "Gmajor"]);
    }

    #[test]
    fn transpose_from_d() {
        let mut s = score(
            2,
            &[(0, "Dmajor"), (1, "Aminor")],
            vec![key(0, 2, KeyMode::Major)],
        );
        s.bars[0].notes = vec![NoteEvent::new(64, q(0), q(4), 80).unwrap()];
        let t = transpose_to_c(&s);
        assert_eq!(t.bars[0].notes[0].pitch, 62);
        assert_eq!(t.harmony[0].chord.to_string(), "Cmajor");
        assert_eq!(t.harmony[1].chord.to_string(), "Gminor");
        assert_eq!(t.key_segments, vec![KeySegment::c_major()]);
    }

    #[test]
    fn transpose_in_c_is_identity_and_idempotent() {
        let s = score(3, &[(0, "Cmajor")], vec![KeySegment::c_major()]);
        assert_eq!(transpose_to_c(&s), s);
        let d = score(3, &[(0, "Dmajor")], vec![key(0, 2, KeyMode::Major)]);
        let once = transpose_to_c(&d);
        assert_eq!(transpose_to_c(&once), once);
    }

    #[test]
    fn transpose_per_segment() {
        let mut s = score(
            16,
            &[(0, "Cmajor"), (8, "Gmajor")],
            vec![KeySegment::c_major(), key(8, 7, KeyMode::Major)],
        );
        for b in &mut s.bars {
            b.notes = vec![NoteEvent::new(67, q(0), q(4), 80).unwrap()];
        }
        let t = transpose_to_c(&s);
        for b in &t.bars {
            let expected = if b.index < 8 { 67 } else { 60 };
            assert_eq!(b.notes[0].pitch, expected, "bar {}", b.index);
        }
        assert_eq!(t.harmony[1].chord.to_string(), "Cmajor");
    }

    #[test]
    fn minor_key_maps_tonic_to_a() {
        let s = score(2, &[(0, "Eminor")], vec![key(0, 4, KeyMode::Minor)]);
        let t = transpose_to_c(&s);
        assert_eq!(t.harmony[0].chord.to_string(), "Aminor");
        // C4 (60) moves down 7 semitones onto F3 (53).
        assert_eq!(t.bars[0].notes[0].pitch, 53);
    }

    #[test]
    fn filter_decisions() {
        let policy = FilterPolicy::default();
        let ok = score(
            4,
            &[(0, "Cmajor"), (1, "Fmajor"), (2, "Gmajor"), (3, "Cmajor")],
            vec![KeySegment::c_major()],
        );
        assert!(matches!(
            filter_score(&ok, &policy),
            FilterOutcome::Accept(_)
        ));

        let mut busy = score(6, &[(0, "Cmajor")], vec![KeySegment::c_major()]);
        for c in ["Fmajor", "Gmajor", "Cmajor"] {
            busy.harmony.push(HarmonyEvent {
                bar_index: 4,
                offset: q(1),
                chord: chord(c),
            });
        }
        assert_eq!(
            filter_score(&busy, &policy),
            FilterOutcome::Reject("bar 4: 3 chord changes".into())
        );

        let chromatic = score(
            2,
            &[(0, "Cmajor"), (1, "F#major")],
            vec![KeySegment::c_major()],
        );
        match filter_score(&chromatic, &policy) {
            FilterOutcome::Reject(reason) => assert!(reason.contains("F#major"), "{reason}"),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn filter_transposes_before_vocabulary_check() {
        let policy = FilterPolicy::default();
        let in_d = score(
            2,
            &[(0, "Dmajor"), (1, "Amajor")],
            vec![key(0, 2, KeyMode::Major)],
        );
        let accepted = filter_score(&in_d, &policy).accepted().unwrap();
        assert_eq!(
            accepted.harmony[1].chord,
            Chord::new(PitchClass::new(7).unwrap(), ChordQuality::Major)
        );
    }

    #[test]
    fn filter_can_forbid_modulation() {
        let policy = FilterPolicy {
            allow_key_modulation: false,
            ..FilterPolicy::default()
        };
        let s = score(
            4,
            &[(0, "Cmajor")],
            vec![KeySegment::c_major(), key(2, 7, KeyMode::Major)],
        );
        assert!(matches!(
            filter_score(&s, &policy),
            FilterOutcome::Reject(_)
        ));
    }

    #[test]
    fn manifest_lines() {
        let rec = ManifestRecord {
            path: "a.musicxml".into(),
            status: ManifestStatus::Rejected,
            reason: Some("bar 4: 3 chord changes".into()),
        };
        let line = rec.to_string();
        assert_eq!(
            line,
            r#"{"path":"a.musicxml","status":"rejected","reason":"bar 4: 3 chord changes"}"#
        );
        let ok = r#"{"path":"b.xml","status":"accepted"}"#;
        let parsed = parse_manifest(&format!("{line}\n\n{ok}\n")).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0], rec);
        assert_eq!(parsed[1].reason, None);
    }
}
