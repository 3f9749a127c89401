//! File formats, run manifests and the `xlalign` command line on top of
//! [`xlalign_core`].

pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod report;
pub mod run_manifest;
pub mod store;
pub mod temb;
pub mod tsv;

pub use error::{FormatError, Result};
pub use xlalign_core as core;
