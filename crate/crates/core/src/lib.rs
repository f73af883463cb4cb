//! A software model of a factor-graph processor for Gaussian message passing.
//!
//! The crate is organized bottom-up:
//!
//! - [`gmp`]: floating-point node update rules and the Faddeev kernel
//! - [`fxp`]: complex fixed-point arithmetic of the datapath
//! - [`systolic`]: cycle-level model of the PE array
//! - [`isa`]: the six-instruction ISA, assembler and disassembler
//! - [`machine`]: memories, instruction execution and the command port
//! - [`compiler`]: graph program to optimized assembly
//! - [`cli`]: the toolchain drivers behind the `fgp` binary
//!
//! Runnable walkthroughs of each layer live in `examples/`.

pub mod bench;
pub mod cli;
pub mod compiler;
pub mod fxp;
pub mod gmp;
pub mod isa;
pub mod linalg;
pub mod machine;
pub mod rls;
pub mod systolic;
pub mod text;
