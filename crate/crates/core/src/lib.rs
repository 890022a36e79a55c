//! Equilibrium solver and Monte Carlo simulator for blockchain markets with
//! discrete clearing and priority-fee ordering.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blocktime;
pub mod error;
pub mod numerics;
pub mod par;
pub mod simulator;
pub mod stage1;
pub mod stage2;
pub mod stage3;
pub mod valuations;

pub use error::{Error, Result};
