//! Lossy delta-checkpoint codec for iterative training.
//!
//! A training run hands its parameter vector to a [`codec::ShadowTracker`],
//! which computes the distance to the last reconstructible state, quantizes
//! it by IEEE-754 exponent class, drops low-priority classes into a zero
//! bucket and keeps the decoder-visible shadow state in lock step. The
//! resulting [`quantize::QuantizedDelta`] is entropy coded with the
//! canonical Huffman coder in [`huffman`].
//!
//! The crate is `no_std` and only needs `alloc`. File formats, persistence
//! and the command line live in the `lcc` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod codec;
mod error;
pub mod float;
pub mod huffman;
pub mod quantize;
pub mod rd;
pub mod state;

pub use error::{Error, Result};
