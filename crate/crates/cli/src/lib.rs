//! Command-line front end and live session service for the chord engine.

pub mod cli;
pub mod corpus;
pub mod protocol;
pub mod session;
pub mod transport;
