//! Randomized analog verification (RAV), cross-entropy benchmarking (XEB)
//! and stochastic approximate unitary compilation (STOQ) for
//! continuously-parameterized gate sets.
//!
//! Conventions: qubit 0 is the most significant bit of a basis index, and a
//! sequence `[G1, G2, …]` has product `⋯ G2 G1`.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod gateset;
pub mod hamsim;
pub mod linalg;
pub mod noisesim;
pub mod protocol;
pub mod rng;
pub mod stoq;

pub use error::{Error, Result};
pub use rng::SeededRng;
