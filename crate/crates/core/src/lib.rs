//! Counterfactual safety threat indicators for multi-actor driving scenes.

pub mod bev;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod grid;
pub mod planner;
pub mod reach;
pub mod realtime;
pub mod report;
pub mod scene;
pub mod sim;

pub use error::{Error, Result};
