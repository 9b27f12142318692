//! Offline signature-based intrusion detection over NSL-KDD connection
//! records encoded as nucleotide sequences.
//!
//! The pipeline has four stages:
//!
//! 1. [`signatures`] builds an attack-signature database from labelled
//!    training records;
//! 2. [`encoding`] turns each record into a fixed-length sequence over
//!    {A,C,G,T};
//! 3. [`detection`] classifies sequences by exact lookup, multi-pattern
//!    substring matching, or frequency-weighted approximate matching;
//! 4. [`reporting`] writes alert logs and false-positive/false-negative
//!    series.
//!
//! [`dataset`] handles record parsing and label normalization, and [`cli`]
//! wires everything into the `nucleo-ids` binary.

pub mod cli;
pub mod dataset;
pub mod detection;
pub mod encoding;
pub mod parallel;
pub mod reporting;
pub mod signatures;
pub mod synth;

pub use dataset::{AttackTaxonomy, ConnectionRecord, LabelClass, RecordSchema};
pub use detection::{DetectionConfig, DetectionMode, MatchEngine, Outcome, Verdict};
pub use encoding::{fit_encoder, EncoderModel, NucleotideSequence};
pub use parallel::Executor;
pub use signatures::{build_database, ConflictPolicy, SignatureDatabase};
