//! Evaluation and data-curation toolkit for web-navigation agent trajectories.

pub mod datafilter;
pub mod dtw;
pub mod embedder;
mod http;
pub mod metrics;
pub mod synthgen;
pub mod trajlog;
pub mod vertex;
