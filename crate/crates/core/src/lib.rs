//! A transformer model of a real-time bidding environment.
//!
//! Given a campaign, its previous day of bidding records and today's records
//! so far, [`model::Bid2x`] predicts cost, reward and impression count of the
//! next slot for a candidate bid, plus the totals to the end of the day.
//! [`synth`] provides auctions with known ground truth. [`pipeline`] ties
//! splitting, normalization, training and fine-tuning together.

pub mod baseline;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod consistency;
pub mod data;
mod error;
pub mod eval;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod synth;
pub mod train;

pub use error::{Error, LineProblem, Result};
