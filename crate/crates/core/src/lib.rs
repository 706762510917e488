// Failures carry the partial execution trace by value on purpose.
#![allow(clippy::result_large_err)]

pub mod bench;
pub mod cache;
pub mod compat;
pub mod container;
pub mod corpus;
pub mod gen;
pub mod graph;
pub mod index;
pub mod name;
pub mod opcode;
pub mod policy;
pub mod text;
pub mod tracer;
pub mod vm;
