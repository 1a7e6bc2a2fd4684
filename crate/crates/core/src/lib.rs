//! Simulation and analysis of a split-packet coincidence experiment.
//!
//! A cascade source emits a blue and a green wave packet together. The blue
//! packet reaches the trigger detector D0; the green one meets a
//! half-transparent mirror and is divided between D1 and D2. Under the
//! single-photon (Copenhagen) model at most one of D1, D2 fires per packet.
//! Under the continuous-absorption (Planck) model each detector fills its own
//! absorbers from its share of the intensity, so double detections occur with
//! probability `p1·p2`.
//!
//! - [`source`]: Poisson emission of packet pairs.
//! - [`apparatus`]: both detector models, dead time.
//! - [`timetag`]: event streams and the CTAG binary format.
//! - [`coincidence`]: window estimators, verdict, shape scan.
//! - [`bell`]: joint-distribution feasibility for three binary variables.
//! - [`experiment`]: configuration and end-to-end runs.

pub mod apparatus;
pub mod bell;
pub mod coincidence;
pub mod error;
pub mod experiment;
pub mod rng;
pub mod source;
pub mod stats;
pub mod timetag;

pub use apparatus::{ApparatusConfig, PhysicsModel};
pub use coincidence::{estimate_p, CoincidenceReport, Verdict, WindowConfig};
pub use error::ConfigError;
pub use experiment::{analyze, run_experiment, RunConfig};
pub use source::{EnvelopeSpec, SourceConfig};
pub use timetag::{read_stream, write_stream, EventStreams};
