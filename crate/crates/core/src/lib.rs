//! Pseudorandom-generator laboratory: Boolean function analysis, combinatorial
//! designs, a small-register quantum simulator, and the reconstruction
//! machinery connecting distinguishers to learners: NW predictors,
//! Goldreich-Levin decoding, direct-product list decoding, and the
//! self-reducibility bootstrap that chains them level by level.

pub mod bitfunc;
pub mod bits;
pub mod bootstrap;
pub mod designs;
pub mod direct_product;
pub mod learner;
pub mod nw;
pub mod oracle;
pub mod qsim;
pub mod rng;
