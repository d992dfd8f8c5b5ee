//! Self-trained, reference-free evaluation of dialogue responses.
//!
//! A teacher classifier learns to separate relevant, adversarial, and random
//! responses from a labeled seed set; it then pseudo-labels a large augmented
//! multi-domain pool, and a student is trained on the confident part of that
//! pool with cross-entropy, a noise-consistency KL term, and masked language
//! modeling. The student's probability of "relevant" is the metric score.

pub mod augment;
pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evalharness;
pub mod jsonl;
pub mod metric;
pub mod pipeline;
pub mod seed;
pub mod selftrain;
pub mod synthetic;
pub mod teacher;
pub mod tokenizer;

pub use error::{Error, Result};
