//! File formats, scenario configuration and the end-to-end pipeline behind
//! the `dualvta` command-line tool.

pub mod config;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod slice;
pub mod validate;
