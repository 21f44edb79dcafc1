//! Simulation and decoding toolkit for dynamic compass codes on the heavy-hex
//! lattice.
//!
//! The crate builds heavy-hex code patches ([`lattice`]), period-4 measurement
//! schedules over their gauge checks ([`schedule`]), tracks the instantaneous
//! stabilizer group to derive detectors ([`isg`]), compiles gate-level circuits
//! with reset and no-reset bookkeeping ([`circuit`]), applies circuit-level
//! noise ([`noise`]), samples detector/observable bits with a bit-packed Pauli
//! frame simulator ([`sampler`]), decodes with exact minimum-weight perfect
//! matching ([`decoder`]), and runs memory/stability/surgery/threshold
//! experiments ([`experiments`], [`threshold`]).
//!
//! The primary interface is the `examples/` directory; each file is a runnable
//! walkthrough of one capability:
//!
//! ```text
//! cargo run --release --example build_layout        # layouts + JSON export
//! cargo run --release --example schedules           # schedules A/B/C + validation
//! cargo run --release --example detectors           # ISG tracking, detector volumes
//! cargo run --release --example generate_circuit    # circuit text round-trip
//! cargo run --release --example sample_and_decode   # sampler -> DEM -> MWPM
//! cargo run --release --example memory_experiment   # logical error rate vs d
//! cargo run --release --example stability_experiment# suppression factors
//! cargo run --release --example lattice_surgery     # XX / ZZ merged patches
//! cargo run --release --example threshold_estimate  # crossing-cluster estimator
//! ```
//!
//! A thin `dcc` binary wraps the same entry points as subcommands
//! (`circuit`, `sample`, `dem`, `decode`, `memory`, `stability`, `surgery`,
//! `threshold`, `surface`, `plot-data`).

pub mod circuit;
pub mod cli;
pub mod decoder;
pub mod experiments;
pub mod isg;
pub mod lattice;
pub mod noise;
pub mod pauli;
pub mod reference;
pub mod sampler;
pub mod schedule;
pub(crate) mod stats;
pub mod threshold;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unsupported patch size {0}: must be odd and at least {1}")]
    UnsupportedDistance(usize, usize),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid schedule: {0:?}")]
    InvalidSchedule(Vec<schedule::ScheduleViolation>),
    #[error("invalid layout: {0:?}")]
    InvalidLayout(Vec<lattice::LayoutViolation>),
    #[error("noise already applied to circuit")]
    AlreadyNoised,
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("mechanism {index} flips {count} detectors in one basis and cannot be decomposed")]
    Undecomposable { index: usize, count: usize },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
