//! Food-crisis forecasting from news text.
//!
//! Pipeline stages: sentence-level bootstrap augmentation of country-month
//! news ([`bootstrap`]), mean-pooled article embeddings ([`embedding`]), a
//! multi-task attention regression model ([`model`], [`trainer`]), gist
//! extraction from attention weights ([`gist`]), LDA topic profiling of the
//! gists ([`topics`]) and a panel autoregressive distributed-lag baseline
//! ([`baseline`]). [`synth`] generates data with planted structure.

pub mod baseline;
pub mod bootstrap;
pub mod cli;
pub mod config;
pub mod embedding;
pub mod error;
pub mod gist;
pub mod io;
pub mod model;
pub mod panel;
pub mod pipeline;
pub mod seed;
pub mod synth;
pub mod text;
pub mod topics;
pub mod trainer;

pub use error::{Error, Result};
