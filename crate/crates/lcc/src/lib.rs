//! Storage, pipeline and experiment side of the lcc codec.
//!
//! [`format`] defines the `.lcc` chunk container, [`store`] the chain
//! directory with its manifest and recovery, and [`pipeline`] the background
//! encoder. [`lab`] holds the contraction-plus-noise simulator and the
//! experiments the `lcc` binary runs.

pub mod error;
pub mod format;
pub mod lab;
pub mod pipeline;
pub mod report;
pub mod statefile;
pub mod store;

pub use error::{LccError, Result};
