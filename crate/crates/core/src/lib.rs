//! Detection triage, verifier routing, field operations and compliance
//! classification for satellite-detected manure spreading.

pub mod analytics;
pub mod compliance;
pub mod config;
pub mod detections;
pub mod engine;
pub mod error;
pub mod eventlog;
pub mod exec;
pub mod fieldops;
pub mod fixture;
pub mod geo;
pub mod registry;
pub mod report;
pub mod routing;
pub mod sim;
pub mod stats;

pub use config::Config;
pub use engine::{Engine, State};
pub use error::{Error, Result};
pub use exec::Exec;
