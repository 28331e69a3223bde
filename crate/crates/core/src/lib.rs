//! Entity-aware retrieval and evaluation for clinical note question answering.

pub mod analysis;
pub mod baseline;
pub mod clear;
pub mod corpus;
pub mod entities;
pub mod generator;
pub mod metrics;
pub mod presets;
pub mod providers;
pub mod retrieval;
pub mod runner;
pub mod sectionizer;
pub mod text;
