mod common;

use bandmate_core::ingest::{
    filter_score, parse_musicxml, to_training_sequence, transpose_to_c, write_musicxml,
    FilterPolicy, HarmonyEvent, KeyMode, KeySegment, Score,
};
use bandmate_core::music::{bar_histogram, Bar, ChordVocabulary, NoteEvent, PitchClass};
use bandmate_core::synth::{generate_corpus, CorpusSpec};
use common::chord;
use num_rational::Rational64;
use proptest::prelude::*;

#[test]
fn synthetic_scores_survive_a_musicxml_round_trip() {
    let corpus = generate_corpus(&CorpusSpec {
        songs: 5,
        ..CorpusSpec::default()
    })
    .unwrap();
    for song in corpus {
        let xml = write_musicxml(&song.score);
        let back = parse_musicxml(xml.as_bytes()).unwrap();
        assert_eq!(back.bars, song.score.bars, "{}", song.id);
        assert_eq!(back.harmony, song.score.harmony);
        assert_eq!(to_training_sequence(&back).unwrap(), song.sequence);
        let again = write_musicxml(&back);
        assert_eq!(again, xml);
    }
}

fn note(pitch: u8, onset: (i64, i64), duration: (i64, i64)) -> NoteEvent {
    NoteEvent::new(
        pitch,
        Rational64::new(onset.0, onset.1),
        Rational64::new(duration.0, duration.1),
        80,
    )
    .unwrap()
}

#[test]
fn triplets_and_mid_bar_harmony_round_trip() {
    let score = Score {
        title: "triplets".into(),
        divisions: 1,
        key_segments: vec![KeySegment {
            start_bar: 0,
            root: PitchClass::new(7).unwrap(),
            mode: KeyMode::Major,
        }],
        bars: vec![
            Bar::new(
                0,
                vec![
                    note(67, (0, 1), (2, 3)),
                    note(71, (2, 3), (2, 3)),
                    note(74, (4, 3), (2, 3)),
                    note(66, (2, 1), (2, 1)),
                ],
            ),
            Bar::new(1, vec![note(67, (0, 1), (4, 1))]),
            Bar::new(2, vec![]),
        ],
        harmony: vec![
            HarmonyEvent {
                bar_index: 0,
                offset: Rational64::from_integer(0),
                chord: chord("Gmajor"),
            },
            HarmonyEvent {
                bar_index: 0,
                offset: Rational64::from_integer(2),
                chord: chord("Dmajor"),
            },
        ],
    };
    let back = parse_musicxml(write_musicxml(&score).as_bytes()).unwrap();
    assert_eq!(back.bars, score.bars);
    assert_eq!(back.harmony, score.harmony);
    assert_eq!(back.key_segments, score.key_segments);
    let seq = to_training_sequence(&back).unwrap();
    // The mid-bar D takes over from bar 1 and carries into the silent bar.
    assert_eq!(
        seq.chords,
        vec![chord("Gmajor"), chord("Dmajor"), chord("Dmajor")]
    );
    assert!(seq.histograms[2].silent);

    // G major moves down 7 semitones to C major; D becomes G.
    let c = transpose_to_c(&score);
    assert_eq!(c.bars[0].notes[0].pitch, 60);
    assert_eq!(c.harmony[1].chord, chord("Gmajor"));
    // Two symbols in bar 0 break the one-change-per-bar rule.
    assert!(
        filter_score(&score, &FilterPolicy::new(ChordVocabulary::full60()))
            .accepted()
            .is_none()
    );
}

proptest! {
    #[test]
    fn histogram_sums_to_one_and_ignores_octaves(
        notes in prop::collection::vec((24u8..96, 0i64..16, 1i64..8), 1..12),
        shift in -2i64..=2,
    ) {
        let events: Vec<NoteEvent> = notes
            .iter()
            .map(|&(p, on, d)| note(p, (on, 4), (d, 4)))
            .collect();
        let h = bar_histogram(&Bar::new(0, events.clone()));
        prop_assert!(!h.silent);
        prop_assert!((h.total() - 1.0).abs() < 1e-12);
        let moved: Vec<NoteEvent> = events
            .iter()
            .map(|n| NoteEvent { pitch: (n.pitch as i64 + 12 * shift) as u8, ..n.clone() })
            .collect();
        let h2 = bar_histogram(&Bar::new(0, moved));
        prop_assert_eq!(h.mass, h2.mass);
        // Each pitch class gets its share of total duration.
        let total: i64 = notes.iter().map(|n| n.2).sum();
        for pc in 0..12 {
            let d: i64 = notes.iter().filter(|n| n.0 as usize % 12 == pc).map(|n| n.2).sum();
            prop_assert!((h.mass[pc] - d as f64 / total as f64).abs() < 1e-12);
        }
    }
}
