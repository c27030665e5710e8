//! Visible-to-thermal data synthesis for pedestrian detection. A paired
//! LSGAN translator produces synthetic thermal frames, which are mixed with
//! real ones to fine-tune a small multi-scale detector scored by miss rate.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod detector;
mod error;
pub mod eval;
pub mod gan;
pub mod mixture;
mod nn;
pub mod perceptual;
pub mod pipeline;
pub mod toy;

pub use error::{Error, Result};
