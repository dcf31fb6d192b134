//! Compiler, verifier and simulator for a declarative network provisioning
//! language.
//!
//! A policy names traffic classes with header predicates, constrains their
//! forwarding paths with regular expressions over network locations, and
//! bounds their bandwidth with caps and guarantees. The compiler turns a
//! policy plus a topology into per-device configuration text.

pub mod localize;
pub mod logical;
pub mod negotiator;
pub mod policy;
pub mod automata;
pub mod bench;
pub mod besteffort;
pub mod codegen;
pub mod compile;
pub mod predicate;
pub mod provision;
pub mod rate;
pub mod sim;
pub mod topology;

pub use rate::Rate;
