//! Closed-form statistics of the multipath interference power seen by an
//! IR-UWB receiver under the IEEE 802.15.4a channel model, with a
//! Monte-Carlo channel oracle to check them against.

// `!(x >= 0.0)` is used on purpose: it rejects NaN along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod error;
pub mod numeric;
pub mod params;
pub mod cluster;
pub mod paths;
pub mod pdp;
pub mod oracle;
pub mod harness;
