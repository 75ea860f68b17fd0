//! File formats, the LLM gateway, configuration and command implementations
//! around [`groundkit_core`].

pub mod cli;
pub mod commands;
pub mod config;
pub mod formats;
pub mod gateway;
pub mod judge;
pub mod manifest;

pub use groundkit_core as core;
