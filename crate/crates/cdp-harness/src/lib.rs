//! Experiment harness for the conformal-dp library: synthetic data
//! generation, image ingestion, sweep orchestration and reporting.

pub mod config;
pub mod experiment;
pub mod report;
pub mod spd_image;
pub mod vmf;
