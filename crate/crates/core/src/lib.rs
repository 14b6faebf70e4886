//! Hierarchical video-language contrastive training at desk scale.
//!
//! Dual encoders are trained on a synthetic procedural dataset with a
//! clip-level objective (language plus two-view visual InfoNCE) and a
//! phase/video-level objective that adds a DTW hinge against temporally
//! reversed child texts. Evaluation covers zero-shot classification,
//! bidirectional Recall@K retrieval, linear probing and a modality-gap scalar.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod cli;
pub mod datagen;
pub mod encoders;
pub mod error;
pub mod evalkit;
pub mod experiment;
pub mod losses;
pub mod numerics;
pub mod textaug;
pub mod trainer;

pub use error::{Error, Result};
