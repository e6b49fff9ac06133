//! Work-zone traffic impact prediction.
//!
//! A planned lane closure is turned into a multi-channel space-time image of
//! its upstream corridor plus a small feature vector; an attention-based
//! multi-context convolutional encoder-decoder predicts the space-time speed
//! image during the closure and the likelihood of an incident.
//!
//! Modules follow the pipeline: [`scenario`] (synthetic corpus) and
//! [`ingest`] (feed files) produce [`scenario::ScenarioRecord`]s,
//! [`spacetime`] turns them into model samples, [`model`] and [`train`] fit
//! the network on top of the [`numerics`] kernel, and [`eval`] scores
//! predictions, including congestion regions found by Otsu thresholding.

pub mod numerics;
pub mod rng;
pub mod scenario;
pub mod spacetime;
pub mod eval;
pub mod model;
pub mod train;
pub mod ingest;
