pub mod core_select;
pub mod diagnostics;
pub mod distributions;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod rng;
