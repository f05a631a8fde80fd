//! Command-line front end for `ordinal-transport`: CSV ingestion, JSON
//! reports and heatmap figures.

pub mod app;
pub mod heatmap;
pub mod ingest;
pub mod report;
