//! Reliability-aware routing for multi-dataset symptom prediction.
//!
//! Per-sample model outputs are calibrated (temperature scaling and split
//! conformal prediction), combined with quality, uncertainty, out-of-distribution
//! and completeness signals, and routed to one of four actions by a frozen,
//! digest-stamped threshold policy.

pub mod anchoring;
pub mod calibration;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod router;
pub mod symptom_space;

pub use calibration::{
    CalibratedPrediction, CalibrationSnapshot, ClassifierOutput, RegressorOutput, TaskKind,
};
pub use error::{Error, Result};
pub use router::{Action, Router, RoutingDecision, ThresholdConfig, Trigger};
pub use symptom_space::{Node, NodeValue, ObservableSet, ReliabilitySignals, SymptomRecord};
