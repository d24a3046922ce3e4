use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MusicError {
    #[error("pitch class {0} outside [0, 11]")]
    PitchClassOutOfRange(i64),
    #[error("MIDI pitch {0} outside [0, 127]")]
    MidiPitchOutOfRange(i64),
    #[error("velocity {0} outside [0, 127]")]
    VelocityOutOfRange(u8),
    #[error("negative note onset {0}")]
    NegativeOnset(String),
    #[error("note duration {0} is not positive")]
    NonPositiveDuration(String),
    #[error("chord id {0} outside [0, 59]")]
    ChordIdOutOfRange(usize),
    #[error("unknown chord kind {0:?}")]
    UnknownChordKind(String),
    #[error("unknown chord name {0:?}")]
    UnknownChordName(String),
    #[error("unknown pitch name {0:?}")]
    UnknownPitchName(String),
    #[error("unknown vocabulary {0:?} (expected full60 or diatonic7)")]
    UnknownVocabulary(String),
    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("not a partwise MusicXML document: {0}")]
    Structure(String),
    #[error("bar {bar}: {message}")]
    Bar { bar: usize, message: String },
    #[error("bar {bar}: unsupported chord kind {kind:?}")]
    UnsupportedKind { bar: usize, kind: String },
    #[error("archive: {0}")]
    Archive(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SequenceError {
    #[error("score has {0} bar(s); a training sequence needs at least 2")]
    TooShort(usize),
    #[error("no chord annotation at or before bar 0")]
    NoInitialChord,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainingError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("sequence {sequence} has {len} bar(s); at least 2 required")]
    SequenceTooShort { sequence: usize, len: usize },
    #[error("sequence {sequence}: chord/histogram length mismatch")]
    LengthMismatch { sequence: usize },
    #[error("sequence {sequence}: chord {chord} is outside the {vocabulary} vocabulary")]
    OutsideVocabulary {
        sequence: usize,
        chord: String,
        vocabulary: String,
    },
    #[error("epsilon must be finite and non-negative, got {0}")]
    InvalidEpsilon(f64),
}

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{what} does not sum to 1 (sum = {sum})")]
    Normalization { what: String, sum: f64 },
    #[error("{what} has an invalid entry {value}")]
    InvalidEntry { what: String, value: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error("observation history is empty")]
    EmptyHistory,
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("search space of {states}^{steps} paths exceeds the enumeration limit")]
    TooLarge { states: usize, steps: usize },
    #[error("emission matrix row {0} has the wrong width")]
    Shape(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("progression period must be at least 2, got {0}")]
    PeriodTooShort(usize),
    #[error("repetitions must be at least 2, got {0}")]
    TooFewRepetitions(usize),
    #[error("notes per bar must be positive")]
    NoNotes,
    #[error("profile sharpness must lie in (0, 1], got {0}")]
    InvalidSharpness(f64),
    #[error("invalid corpus request: {0}")]
    InvalidCorpus(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("cannot score an empty sequence")]
    Empty,
    #[error("corpus of {corpus} song(s) is smaller than the {folds} folds requested")]
    CorpusTooSmall { corpus: usize, folds: usize },
    #[error("at least 2 paired samples required, got {0}")]
    TooFewSamples(usize),
    #[error("paired differences have zero variance")]
    ZeroVariance,
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}
