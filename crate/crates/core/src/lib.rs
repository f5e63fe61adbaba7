//! Block-level explanations for black-box text classifiers.
//!
//! Documents are split into fixed-size token blocks; blocks are masked at
//! random over many iterations and the resulting drops in each label's
//! probability are attributed back to the blocks. Around that core the crate
//! provides bootstrap significance tests, pair interactions, an
//! occlusion-with-sampled-context baseline, a call-count model and the
//! statistics used to compare explanation methods against human judgments.

pub mod backends;
pub mod cli;
pub mod corpus;
pub mod cost;
pub mod eval;
pub mod exec;
pub mod msp;
pub mod report;
pub mod significance;
pub mod soc;
pub mod text;

pub use backends::{BackendError, ClassifierBackend};
pub use exec::Execution;
pub use msp::{run_msp, MspConfig, PerturbationRecord};
pub use text::{Block, Document, SegmentationConfig};
