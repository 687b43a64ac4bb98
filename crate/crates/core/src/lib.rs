//! Dual symbolic/neural robot skill programs.
//!
//! Symbolic skill programs ([`dsl`]) are synthesized from a knowledge base
//! ([`kb`]), executed on a deterministic peg-in-hole simulator ([`sim`]),
//! mirrored by chains of neural surrogates ([`surrogate`]) and optimized by
//! gradient descent through those surrogates ([`optim`]) across the
//! commissioning and operation phases ([`lifecycle`]).

pub mod adam;
pub mod dsl;
pub mod kb;
pub mod lifecycle;
mod lexer;
pub mod optim;
pub mod sim;
pub mod surrogate;

/// Text of the peg-in-hole benchmark program.
pub const BENCHMARK_PROGRAM: &str = include_str!("../../../bench/insert_peg.skl");

/// Reference knowledge base of the insertion cell.
pub const REFERENCE_KB: &str = include_str!("../../../kb/insertion.kb");
