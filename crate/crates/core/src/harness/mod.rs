//! Data ingestion, the house-switching protocol, experiment orchestration
//! and reporting.

pub mod config;
pub mod experiment;
pub mod io;
pub mod report;
pub mod schedule;
pub mod synth;
