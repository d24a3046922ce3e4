#![allow(dead_code)]

use bandmate::protocol::Inbound;
use bandmate::session::ModelSet;
use bandmate_core::ingest::{Score, TrainingSequence};
use bandmate_core::music::{Chord, ChordVocabulary, VocabularyMode};
use bandmate_core::synth::{generate_corpus, generate_song, CorpusSpec, MelodyMode, SynthSpec};
use bandmate_core::training::{train, HmmModel};
use num_rational::Rational64;

pub fn model(mode: VocabularyMode) -> HmmModel {
    let corpus: Vec<TrainingSequence> = generate_corpus(&CorpusSpec {
        songs: 30,
        melody: MelodyMode::RootOnly,
        profile_sharpness: 1.0,
        seed: 5,
        ..CorpusSpec::default()
    })
    .unwrap()
    .into_iter()
    .map(|s| s.sequence)
    .collect();
    train(&corpus, &ChordVocabulary::new(mode), 1e-6).unwrap()
}

pub fn models() -> ModelSet {
    let mut set = ModelSet::new();
    set.insert(model(VocabularyMode::DiatonicC7));
    set
}

pub fn chords(names: &[&str]) -> Vec<Chord> {
    names.iter().map(|n| n.parse().unwrap()).collect()
}

pub fn periodic_song(progression: &[Chord], repetitions: usize) -> (Score, TrainingSequence) {
    generate_song(&SynthSpec {
        progression: progression.to_vec(),
        repetitions,
        notes_per_bar: 8,
        profile_sharpness: 1.0,
        seed: 11,
        melody: MelodyMode::RootOnly,
    })
    .unwrap()
}

// Milliseconds at 120 bpm: one quarter note lasts 500 ms.
fn ms(q: Rational64) -> u64 {
    let v = q * Rational64::from_integer(500);
    assert!(v.is_integer());
    *v.numer() as u64
}

/// Note and bar messages that replay a score at 120 bpm, four quarters a bar.
pub fn score_messages(score: &Score) -> Vec<Inbound> {
    let mut out = vec![Inbound::Config {
        alpha: Some(0.5),
        vocabulary: Some("diatonic7".into()),
        tempo_bpm: Some(120.0),
    }];
    for (i, bar) in score.bars.iter().enumerate() {
        let start = 2000 * i as u64;
        for n in &bar.notes {
            let on = start + ms(n.onset);
            out.push(Inbound::NoteOn {
                pitch: n.pitch,
                velocity: n.velocity,
                time_ms: on,
            });
            out.push(Inbound::NoteOff {
                pitch: n.pitch,
                time_ms: on + ms(n.duration),
            });
        }
        out.push(Inbound::Bar {
            index: i as u64,
            time_ms: Some(start + 2000),
        });
    }
    out
}

pub fn lines(messages: &[Inbound]) -> Vec<String> {
    messages
        .iter()
        .map(|m| serde_json::to_string(m).unwrap())
        .collect()
}

/// Replies with every `latency_ms` field removed.
pub fn without_latency(replies: &[String]) -> Vec<serde_json::Value> {
    replies
        .iter()
        .map(|r| {
            let mut v: serde_json::Value = serde_json::from_str(r).unwrap();
            if let Some(map) = v.as_object_mut() {
                map.remove("latency_ms");
            }
            v
        })
        .collect()
}
