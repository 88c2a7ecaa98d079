//! Desk-scale seq2seq model used by the toy trainer backend, plus the
//! optimizer and learning-rate schedule shared by training code.

pub mod optim;
pub mod tokenizer;
pub mod toy;

pub use optim::{AdamW, LinearDecay};
pub use toy::{Encoded, Example, ToySeq2Seq};
