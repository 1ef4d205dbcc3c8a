//! Pathway-masked sparse classifiers and graph neural classifiers for
//! binary clinical outcome prediction, with the training, evaluation,
//! hyperparameter-search and per-patient agreement machinery around them.

pub mod agreement;
pub mod engine;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod io;
pub mod model;
pub mod pathway;
pub mod pnet;
pub mod search;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
