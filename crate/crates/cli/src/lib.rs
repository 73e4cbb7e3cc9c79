//! Command-line and HTTP front ends for fer-core models.

pub mod config;
pub mod input;
pub mod predict;
pub mod service;
