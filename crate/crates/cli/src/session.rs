//! Bar-clocked live session: note events are grouped into bars, and every
//! bar message yields one chord prediction.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::Instant;

use bandmate_core::music::{bar_histogram, Bar, NoteEvent, VocabularyMode};
use bandmate_core::predictor::{SessionConfig, SessionState, DEFAULT_ALPHA};
use bandmate_core::training::HmmModel;
use num_rational::Rational64;
use thiserror::Error;

use crate::protocol::{parse_inbound, Inbound, Outbound};

pub const DEFAULT_TEMPO_BPM: f64 = 120.0;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("websocket: {0}")]
    WebSocket(Box<tungstenite::Error>),
}

impl From<tungstenite::Error> for TransportError {
    fn from(e: tungstenite::Error) -> Self {
        TransportError::WebSocket(Box::new(e))
    }
}

/// Moves protocol lines in and out of a session.
pub trait Transport {
    /// Next inbound payload; `None` once the peer has gone.
    fn recv(&mut self) -> Result<Option<String>, TransportError>;
    fn send(&mut self, payload: &str) -> Result<(), TransportError>;
}

/// Trained models keyed by vocabulary, shared read-only across sessions.
#[derive(Debug, Clone, Default)]
pub struct ModelSet {
    models: HashMap<VocabularyMode, Arc<HmmModel>>,
    default: Option<VocabularyMode>,
}

impl ModelSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// The first model inserted is the default vocabulary.
    pub fn insert(&mut self, model: HmmModel) {
        let mode = model.vocabulary.mode();
        self.default.get_or_insert(mode);
        self.models.insert(mode, Arc::new(model));
    }

    pub fn get(&self, mode: VocabularyMode) -> Option<&Arc<HmmModel>> {
        self.models.get(&mode)
    }

    pub fn default_mode(&self) -> Option<VocabularyMode> {
        self.default
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionDefaults {
    pub alpha: f64,
    pub tempo_bpm: f64,
}

impl Default for SessionDefaults {
    fn default() -> Self {
        SessionDefaults {
            alpha: DEFAULT_ALPHA,
            tempo_bpm: DEFAULT_TEMPO_BPM,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Open {
    start_ms: u64,
    velocity: u8,
}

#[derive(Debug, Clone, Copy)]
struct Closed {
    pitch: u8,
    velocity: u8,
    start_ms: u64,
    end_ms: u64,
}

/// What one inbound line produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub replies: Vec<Outbound>,
    /// The session must end after the replies are sent.
    pub abort: bool,
}

impl Step {
    fn none() -> Self {
        Step {
            replies: Vec::new(),
            abort: false,
        }
    }

    fn reply(message: Outbound) -> Self {
        Step {
            replies: vec![message],
            abort: false,
        }
    }

    fn fatal(message: impl Into<String>) -> Self {
        Step {
            replies: vec![Outbound::error(message)],
            abort: true,
        }
    }
}

/// Protocol state for one connection. Transport-agnostic: feed it lines.
pub struct Session<'a> {
    models: &'a ModelSet,
    defaults: SessionDefaults,
    engine: Option<SessionState>,
    vocabulary: Option<VocabularyMode>,
    tempo_bpm: f64,
    open: BTreeMap<u8, Vec<Open>>,
    closed: Vec<Closed>,
    bar_start_ms: u64,
    latest_ms: u64,
    last_bar: Option<u64>,
}

impl<'a> Session<'a> {
    pub fn new(models: &'a ModelSet, defaults: SessionDefaults) -> Self {
        Session {
            models,
            defaults,
            engine: None,
            vocabulary: None,
            tempo_bpm: defaults.tempo_bpm,
            open: BTreeMap::new(),
            closed: Vec::new(),
            bar_start_ms: 0,
            latest_ms: 0,
            last_bar: None,
        }
    }

    pub fn handle_line(&mut self, line: &str) -> Step {
        match parse_inbound(line) {
            Ok(message) => self.handle(message),
            Err(e) => Step::reply(Outbound::error(format!("malformed message: {e}"))),
        }
    }

    pub fn handle(&mut self, message: Inbound) -> Step {
        match message {
            Inbound::Config {
                alpha,
                vocabulary,
                tempo_bpm,
            } => self.configure(alpha, vocabulary, tempo_bpm),
            Inbound::NoteOn {
                pitch,
                velocity,
                time_ms,
            } => {
                if pitch > 127 || velocity > 127 {
                    return Step::reply(Outbound::error(format!(
                        "note_on out of MIDI range: pitch {pitch}, velocity {velocity}"
                    )));
                }
                self.touch(time_ms);
                if velocity == 0 {
                    self.release(pitch, time_ms);
                } else {
                    self.open.entry(pitch).or_default().push(Open {
                        start_ms: time_ms,
                        velocity,
                    });
                }
                Step::none()
            }
            Inbound::NoteOff { pitch, time_ms } => {
                self.touch(time_ms);
                self.release(pitch, time_ms);
                Step::none()
            }
            Inbound::Bar { index, time_ms } => self.close_bar(index, time_ms),
        }
    }

    fn touch(&mut self, time_ms: u64) {
        self.latest_ms = self.latest_ms.max(time_ms);
    }

    // Oldest sounding note of that pitch; a stray release is ignored.
    fn release(&mut self, pitch: u8, time_ms: u64) {
        let Some(stack) = self.open.get_mut(&pitch) else {
            return;
        };
        let note = stack.remove(0);
        if stack.is_empty() {
            self.open.remove(&pitch);
        }
        self.closed.push(Closed {
            pitch,
            velocity: note.velocity,
            start_ms: note.start_ms,
            end_ms: time_ms,
        });
    }

    fn configure(
        &mut self,
        alpha: Option<f64>,
        vocabulary: Option<String>,
        tempo_bpm: Option<f64>,
    ) -> Step {
        if let Some(bpm) = tempo_bpm {
            if !(bpm.is_finite() && bpm > 0.0) {
                return Step::reply(Outbound::error(format!(
                    "tempo_bpm must be positive, got {bpm}"
                )));
            }
        }
        let mode = match vocabulary.as_deref().map(str::parse::<VocabularyMode>) {
            Some(Ok(m)) => Some(m),
            Some(Err(e)) => return Step::reply(Outbound::error(e.to_string())),
            None => None,
        };
        let started = self.last_bar.is_some();
        if started {
            if mode.is_some_and(|m| Some(m) != self.vocabulary) {
                return Step::reply(Outbound::error(
                    "vocabulary cannot change once bars have started",
                ));
            }
            let current = self.engine.as_ref().map(|e| e.config().alpha);
            if alpha.is_some_and(|a| Some(a) != current) {
                return Step::reply(Outbound::error(
                    "alpha cannot change once bars have started",
                ));
            }
        } else {
            let mode = match mode.or(self.vocabulary).or(self.models.default_mode()) {
                Some(m) => m,
                None => return Step::reply(Outbound::error("no model loaded")),
            };
            let Some(model) = self.models.get(mode) else {
                return Step::reply(Outbound::error(format!(
                    "no model loaded for vocabulary {mode}"
                )));
            };
            let alpha = alpha
                .or(self.engine.as_ref().map(|e| e.config().alpha))
                .unwrap_or(self.defaults.alpha);
            let config = SessionConfig {
                alpha,
                ..SessionConfig::default()
            };
            match SessionState::new(Arc::clone(model), config) {
                Ok(engine) => {
                    self.engine = Some(engine);
                    self.vocabulary = Some(mode);
                }
                Err(e) => return Step::reply(Outbound::error(e.to_string())),
            }
        }
        if let Some(bpm) = tempo_bpm {
            self.tempo_bpm = bpm;
        }
        Step::none()
    }

    fn ms_to_quarters(&self, ms: u64) -> Rational64 {
        // Tempo is kept to a thousandth of a beat per minute.
        let milli_bpm = (self.tempo_bpm * 1000.0).round() as i64;
        Rational64::new(ms as i64 * milli_bpm, 60_000_000)
    }

    fn collect_bar(&mut self, end_ms: u64) -> Bar {
        for (pitch, stack) in std::mem::take(&mut self.open) {
            for note in stack {
                self.closed.push(Closed {
                    pitch,
                    velocity: note.velocity,
                    start_ms: note.start_ms,
                    end_ms,
                });
            }
        }
        let start = self.bar_start_ms;
        let mut notes: Vec<NoteEvent> = std::mem::take(&mut self.closed)
            .into_iter()
            .map(|c| {
                let onset = c.start_ms.saturating_sub(start);
                let duration = c.end_ms.saturating_sub(c.start_ms).max(1);
                NoteEvent::new(
                    c.pitch,
                    self.ms_to_quarters(onset),
                    self.ms_to_quarters(duration),
                    c.velocity,
                )
                .expect("pitch and velocity checked on arrival, duration is positive")
            })
            .collect();
        notes.sort_by(|a, b| a.onset.cmp(&b.onset).then(a.pitch.cmp(&b.pitch)));
        Bar::new(0, notes)
    }

    fn close_bar(&mut self, index: u64, time_ms: Option<u64>) -> Step {
        let received = Instant::now();
        if let Some(prev) = self.last_bar {
            if index <= prev {
                return Step::fatal(format!(
                    "bar index {index} does not follow {prev}; session aborted"
                ));
            }
        }
        if self.engine.is_none() {
            return Step::reply(Outbound::error("bar received before config"));
        }
        if let Some(t) = time_ms {
            self.touch(t);
        }
        let end_ms = time_ms.unwrap_or(self.latest_ms).max(self.bar_start_ms);
        let mut bar = self.collect_bar(end_ms);
        bar.index = self.engine.as_ref().map_or(0, SessionState::bar_count);
        self.bar_start_ms = end_ms;
        self.last_bar = Some(index);

        let engine = self.engine.as_mut().expect("checked above");
        match engine.next_chord_prediction(bar_histogram(&bar)) {
            Ok(p) => Step::reply(Outbound::Chord {
                bar_index: index,
                root: p.predicted_next_chord.root.name().to_string(),
                quality: p.predicted_next_chord.quality.name().to_string(),
                source: p.source,
                latency_ms: received.elapsed().as_secs_f64() * 1e3,
            }),
            Err(e) => Step::reply(Outbound::error(e.to_string())),
        }
    }
}

/// How a session ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionEnd {
    Disconnected,
    Aborted,
}

pub fn run_session<T: Transport + ?Sized>(
    transport: &mut T,
    models: &ModelSet,
    defaults: SessionDefaults,
) -> Result<SessionEnd, TransportError> {
    let mut session = Session::new(models, defaults);
    while let Some(line) = transport.recv()? {
        if line.trim().is_empty() {
            continue;
        }
        let step = session.handle_line(&line);
        for reply in &step.replies {
            transport.send(&reply.to_line())?;
        }
        if step.abort {
            return Ok(SessionEnd::Aborted);
        }
    }
    Ok(SessionEnd::Disconnected)
}
