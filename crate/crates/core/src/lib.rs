//! A mini compiler and runtime for distributed dataflow programs.
//!
//! The pieces: bounded join-semilattice types with detectable tops
//! ([`lattice`]), a dataflow IR with a small textual DSL ([`ir`]), a
//! deterministic tick-based executor ([`runtime`]), seeded adversarial
//! channel simulation ([`netsim`]), a catalog of checked semantics-preserving
//! rewrites ([`transform`]), and a shopping-cart scenario harness with an
//! equivalence fuzzer ([`scenario`], [`verify`]).

pub mod corpus;
pub mod ir;
pub mod lattice;
pub mod netsim;
pub mod registry;
pub mod runtime;
pub mod scenario;
pub mod transform;
pub mod value;
pub mod verify;
