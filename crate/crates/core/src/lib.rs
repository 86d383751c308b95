//! Preference-aligned pair selection for evolutionary Euclidean TSP solving.

pub mod engine;
pub mod error;
pub mod llm;
pub mod metrics;
pub mod operators;
pub mod selection;
pub mod tsp;

#[cfg(test)]
mod properties;

pub use error::{Error, Result, TourError};
