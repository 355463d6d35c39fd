//! Symbolic calculus for Frobenius Heisenberg categories.
//!
//! The library represents string diagrams for the monoidal category attached
//! to a Frobenius algebra F = F_1 + ... + F_n and a central charge k, rewrites
//! them under the defining relations of three equivalent presentations,
//! evaluates closed diagrams (bubbles) exactly, and checks the category
//! equivalences between those presentations and the partial Karoubi envelope
//! at desk scale. All arithmetic is exact rational.

pub mod scalar;
pub mod frobenius;
pub mod diagram;
pub mod awpa;
pub mod bubbles;
pub mod rewrite;
pub mod presentations;
pub mod karoubi;
pub mod dsl;
pub mod cli;
