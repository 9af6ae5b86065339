//! File formats, annotation providers, configuration and the command-line
//! pipeline around `moodloop-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annotations;
pub mod cli;
pub mod config;
pub mod error;
pub mod evalfiles;
pub mod external;
pub mod fsio;
pub mod modelfile;
pub mod outputs;
pub mod scorefile;

pub use error::{Error, Result};
