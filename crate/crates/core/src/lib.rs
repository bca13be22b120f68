//! Lifts bit-level, per-instruction accelerator semantics to tensor-level
//! ISA specifications.
//!
//! The flow is: [`corpus`] produces bit-level IR, [`passes`] lift it, the
//! [`oracle`] checks every rewrite bit-exactly and the [`assembler`] turns the
//! lifted functions into TAIDL builder text. [`cli`] wraps the flow as the
//! `tensorlift` binary.

pub mod ir;
pub mod oracle;
pub mod corpus;
pub mod passes;
pub mod assembler;
pub mod cli;
