//! Generated code: random blocks for property tests and the synthetic
//! equivalence corpus.

pub mod equiv;
pub mod random;
