//! Library side of the `nedm` command-line tool: configuration, file
//! formats, manifests and the command implementations.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod output;
pub mod quantity;
