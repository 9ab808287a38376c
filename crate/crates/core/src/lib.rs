//! Edge unlearning for graph collaborative-filtering recommenders via a
//! pre-trained influence encoder.
//!
//! The crate trains LightGCN-style backbones (optionally with SGL edge-drop or
//! SimGCL noise contrastive objectives), pre-trains an influence encoder on
//! simulated unlearning requests, applies and fine-tunes it on real requests,
//! and evaluates utility and unlearning efficacy against full retraining.

pub mod backbone;
pub mod config;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod losses;
pub mod numerics;
pub mod pipeline;

pub use error::{Error, Result};
