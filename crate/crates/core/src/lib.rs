//! Event spotting in football tracking data.

pub mod data;
pub mod encoder;
pub mod evaluator;
pub mod graph;
pub mod numeric;
pub mod plotting;
pub mod pooling;
pub mod spotter;
pub mod synthetic;
pub mod trainer;
