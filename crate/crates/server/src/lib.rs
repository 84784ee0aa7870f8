//! HTTP service and command line over the street persona engine.

pub mod api;
pub mod cli;
pub mod config;
pub mod engine;
