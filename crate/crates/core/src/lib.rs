//! Planning, analysis, and simulated execution of two-dimensional
//! block-cyclic data redistribution between processor grids.
//!
//! An `N x N` grid of data blocks, distributed block-cyclically over a
//! source grid of processors, is moved to the block-cyclic distribution of
//! a destination grid. Planning works on one superblock (the smallest tile
//! whose source-to-destination mapping repeats across the matrix) and emits
//! a stepped communication schedule in which every source sends exactly one
//! message per step. When a schedule has node contention, circular row and
//! column shifts rearrange it to reduce the collisions. The simulator in
//! [`redistribute`] executes a plan against in-memory stores and checks the
//! outcome against the ownership formulas alone.

pub mod analytics;
pub mod plandoc;
pub mod redistribute;
pub mod schedule;
pub mod topology;

use std::fmt;

pub use schedule::{plan, RedistributionPlan, ShiftCase};
pub use topology::{BlockDesc, GridShape, Pid, RedistProblem, TopologyError};

/// Numeric element carried in simulated block payloads and cost figures.
pub trait Scalar:
    num_traits::Float + num_traits::FromPrimitive + fmt::Debug + fmt::Display
{
}

impl<T> Scalar for T where
    T: num_traits::Float + num_traits::FromPrimitive + fmt::Debug + fmt::Display
{
}

/// Simulator block over double-precision payload elements.
pub type Block = redistribute::Block<f64>;
/// Simulator store over double-precision payload elements.
pub type LocalStore = redistribute::LocalStore<f64>;
/// Simulator message over double-precision payload elements.
pub type Message = redistribute::Message<f64>;
/// Cost parameters in double-precision seconds.
pub type CostParams = analytics::CostParams<f64>;
