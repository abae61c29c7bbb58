//! Core library for identifying and interpreting masked ("dark") jargon by
//! comparing word usage across two corpora.

mod binio;
pub mod context;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod store;
pub mod synth;
pub mod vocab;

pub use error::{Error, Result};
