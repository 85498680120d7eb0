//! Independent reference routines used only by tests.
//!
//! Nothing in here shares code with the production crates. Values are
//! computed in double-double arithmetic (about 106 bits of mantissa) or
//! with deliberately naive loops, so they can serve as oracles for the
//! optimized paths.

pub mod dd;
pub mod naive;

pub use dd::Dd;
