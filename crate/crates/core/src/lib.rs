// NaN must fail range checks, so negated comparisons are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod formats;
pub mod geometry;
pub mod imageio;
pub mod imgproc;
pub mod isocenter;
pub mod lk;
pub mod lsq;
pub mod models;
pub mod pipeline;
pub mod report;
pub mod sim;
pub mod synth;
pub mod template;

pub use error::{Error, LostReason, Result};
