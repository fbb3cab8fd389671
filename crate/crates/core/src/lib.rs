//! Minimum-power multicast transmission of multi-quality tiled 360-degree
//! video over multi-antenna OFDMA.
//!
//! The numerical core is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

// `!(x > 0)` deliberately rejects NaN as well; index loops over several
// parallel arrays read better than zipped iterators.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod audit;
pub mod beamforming;
pub mod channel;
pub mod cxkernel;
pub mod dc;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod ofdma;
pub mod partition;
pub mod scalar;

pub use error::{Error, Result};

pub type CVec = cxkernel::CVec<f64>;
pub type ChannelState = channel::ChannelState<f64>;
pub type BeamPlan = beamforming::BeamPlan<f64>;
pub type Allocation = ofdma::Allocation<f64>;
pub type QuotedProblem = ofdma::QuotedProblem<f64>;
