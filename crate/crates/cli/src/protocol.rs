//! Wire messages. One JSON object per line on standard streams, one per text
//! frame on the socket endpoint.

use bandmate_core::predictor::PredictionSource;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Inbound {
    NoteOn {
        pitch: u8,
        velocity: u8,
        time_ms: u64,
    },
    NoteOff {
        pitch: u8,
        time_ms: u64,
    },
    Bar {
        index: u64,
        /// Boundary time; defaults to the latest event time seen.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        time_ms: Option<u64>,
    },
    Config {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vocabulary: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tempo_bpm: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outbound {
    /// Predicted chord for the bar after `bar_index`.
    Chord {
        bar_index: u64,
        root: String,
        quality: String,
        source: PredictionSource,
        latency_ms: f64,
    },
    Error {
        message: String,
    },
}

impl Outbound {
    pub fn error(message: impl Into<String>) -> Self {
        Outbound::Error {
            message: message.into(),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("outbound messages always serialize")
    }
}

pub fn parse_inbound(line: &str) -> Result<Inbound, serde_json::Error> {
    serde_json::from_str(line)
}
