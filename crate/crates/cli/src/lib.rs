//! Command-line front end and HTTP JSON service for the origami toolkit.

pub mod cli;
pub mod error;
pub mod jobs;
pub mod pipeline;
pub mod server;
pub mod store;
