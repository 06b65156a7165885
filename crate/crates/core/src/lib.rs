//! Core algorithms for a multi-drone mural painting system.
//!
//! The crate is `no_std` (it needs `alloc`) and free of IO: file formats,
//! networking and the command line live in the companion `mural` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod assign;
pub mod compiler;
pub mod control;
pub mod executor;
pub mod fsm;
pub mod geom;
pub mod lidar;
pub mod math;
pub mod progress;
pub mod sim;
pub mod vision;
