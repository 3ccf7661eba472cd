//! Group-based knowledge distillation with online role change.
//!
//! A ladder of classifiers of strictly decreasing capacity is split into a
//! teacher group (a pre-trained pivot plus temporarily promoted students) and
//! a student group. Every iteration the best-performing student is promoted
//! to temporary teacher, the pivot is fine-tuned on the students' hardest
//! instances, knowledge is distilled from the teacher group to every student,
//! and the temporary teacher steps back down.
//!
//! The crate is self-contained: [`tensor`] provides a small f64 tensor type
//! with reverse-mode autodiff, [`nets`] a parameterized MLP/conv model zoo,
//! [`losses`] the distillation losses, [`roles`] the promotion/feedback
//! scheduler, [`data`] ingestion and batching, [`trainer`] the per-iteration
//! protocol and experiment runner, and [`config`]/[`metrics`] the run
//! configuration and CSV reporting used by the `orc` binary.

pub mod config;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod rng;
pub mod roles;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
