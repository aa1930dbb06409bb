//! Keyed green/red-list watermarks for token sequences.
//!
//! The crate covers the whole loop: a keyed vocabulary partition shared by
//! generator and detector ([`partition`]), the detection statistics
//! ([`stats`]), closed-form detectability bounds ([`theory`]), watermarked
//! generation over a pluggable model ([`generation`]), corpus scoring and
//! ROC summaries ([`detection`]), on-disk formats ([`wire`]) and the
//! seeded Monte Carlo experiments ([`harness`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases at
//! the bottom of this file pin the `f64` instantiation used by the harness
//! and the CLI.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection;
pub mod error;
pub mod generation;
pub mod harness;
pub mod partition;
pub mod scalar;
pub mod stats;
pub mod theory;
pub mod wire;

pub use error::{Result, WatermarkError};
pub use partition::{
    classify_token, decide_polarity, derive_seed, partition_vocab, PartitionOutcome, PartitionParams, Polarity,
    PolarityPolicy, SplitMix64, WatermarkKey, WatermarkParams,
};
pub use scalar::Scalar;
pub use stats::{Counts, GreenCounts, ProbVector, Scheme, ScoreReport, WeightedCounts};

pub type ProbVectorF64 = stats::ProbVector<f64>;
pub type WeightedCountsF64 = stats::WeightedCounts<f64>;
pub type ScoreReportF64 = stats::ScoreReport<f64>;
pub type BoundInputsF64 = theory::BoundInputs<f64>;
pub type SequenceRecordF64 = detection::SequenceRecord<f64>;
pub type CorpusSummaryF64 = detection::CorpusSummary<f64>;
pub type DetectionOptionsF64 = detection::DetectionOptions<f64>;
pub type GenerationConfigF64 = generation::GenerationConfig<f64>;
pub type GenerationTraceF64 = generation::GenerationTrace<f64>;
pub type SyntheticModelF64 = generation::SyntheticModel<f64>;

pub type ProbVectorF32 = stats::ProbVector<f32>;
pub type WeightedCountsF32 = stats::WeightedCounts<f32>;
pub type ScoreReportF32 = stats::ScoreReport<f32>;
pub type BoundInputsF32 = theory::BoundInputs<f32>;
