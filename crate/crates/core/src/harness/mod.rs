//! Ingestion, configuration, synthetic data and pipeline orchestration.

pub mod config;
pub mod longitudinal;
pub mod lsq;
pub mod pipeline;
pub mod synth;
pub mod table;
pub mod windows;

pub use config::PipelineConfig;
pub use longitudinal::{
    evaluate_anchoring, read_longitudinal, write_longitudinal, AnchorEvalReport, AnchorMethod,
};
pub use pipeline::{
    run_pipeline, write_outputs, MetricsReport, Partition, PipelineOutputs, ThresholdSnapshot,
};
pub use synth::{
    generate_longitudinal, generate_synthetic_cohort, LongitudinalSpec, SynthSpec, SyntheticCohort,
};
pub use table::{ingest_csv, ingest_reader, write_csv, SampleRow, SampleTable, Split};
pub use windows::{segment_windows, WindowSpec};
