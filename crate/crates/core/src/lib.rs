//! Whole-of-service performance signatures.
//!
//! This crate characterizes an application's performance by fitting the
//! exponential CDF general form `Y = 1 - exp(-(k*X + j))` to per-window
//! service-time distributions and detecting slow-down anomalies from
//! normalized changes in the fitted parameters. It treats the measured
//! system as a black box: the only input is a log of end-to-end response
//! times observed at the front of the service.
//!
//! Pipeline: [`ingest`] parses logs into fixed windows, [`signature`]
//! builds each window's empirical CDF and fits `(k, j)`, [`detect`]
//! normalizes window-to-window parameter changes and flags transitions in
//! low-probability quantization bins, [`profile`] summarizes the
//! transaction mix, and [`simulate`] provides a seeded M/M/1 queue as a
//! closed-form ground truth for validating the fitter and detector.

pub mod detect;
pub mod ingest;
pub mod profile;
pub mod signature;
pub mod simulate;

pub use detect::{
    AnomalyEvent, ChangeDistribution, ChangeProfile, DetectorConfig, EventKind, NormalizationMode,
    Parameter, Transition,
};
pub use ingest::{InputFormat, ParsedLog, RejectedLine, SampleWindow, TransactionRecord};
pub use profile::{workload_profile, WorkloadProfile};
pub use signature::{EmpiricalCDF, GoSSummary, InitialEstimate, Signature, SignatureComparison};
pub use simulate::{AnomalySchedule, ScheduleEntry, SimConfig, SimOutput, WindowLabel};
