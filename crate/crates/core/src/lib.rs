#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bench;
pub mod cfg;
pub mod corpus;
pub mod isa;
pub mod neural;
pub mod normalize;
pub mod rng;
pub mod slicer;
pub mod sym;
pub mod synth;
pub mod tokenizer;
