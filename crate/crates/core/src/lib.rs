#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod agents;
pub mod analysis;
pub mod model;
pub mod payoff;
pub mod pool;
pub mod rng;
pub mod session;
pub mod validate;
