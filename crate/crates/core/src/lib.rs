//! Core of a transformer-based deep biaffine dependency parser that can embed
//! the source treebank of every sentence, either summed into the encoder
//! input, concatenated to the encoder output, or both.
//!
//! The crate is `no_std` (with `alloc`): it holds the tensor engine, the
//! CoNLL-U data model, the encoder, the biaffine scorer, tree decoding and
//! attachment-score evaluation. File IO, training orchestration and the CLI
//! live in the `dsembed` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod biaffine;
pub mod conllu;
pub mod decode;
pub mod encoder;
mod error;
pub mod eval;
pub mod layers;
pub mod model;
pub mod tensor;

pub use error::{Error, Result};
pub use model::{InjectionMode, ModelConfig, ParserModel};
pub use tensor::Tensor;
