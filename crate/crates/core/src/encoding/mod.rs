//! Frequency bases and position schedules for every rotary scheme.

mod basis;
mod positions;
mod xpos;

pub use basis::{
    power_basis, rope_basis, truncated_basis, BasisScheme, FrequencyBasis, PowerParams,
    TruncationParams, DEFAULT_BASE,
};
pub use positions::{
    linear_positions, positions_from_gaps, randomized_positions, PositionSchedule,
    RandomizedParams, ScaleParams,
};
pub use xpos::{xpos_decay, Precision, XPosParams, HALF_MAX};
