//! Remaining-useful-life regression for run-to-failure sensor data.
//!
//! LSTM and GRU regressors written from scratch, a genetic search over
//! learning rate and batch size, CMAPSS ingestion and CSV reporting.

pub mod data;
pub mod model;
pub mod nn;
pub mod genetic;
pub mod report;
pub mod synthetic;
