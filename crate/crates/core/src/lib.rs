//! Online thinning of long design-point streams.
//!
//! A candidate stream `X_1, X_2, ...` is inspected once, in order, and a
//! fraction `alpha` of it is retained so that the normalized information
//! matrix of the retained points approaches the optimum over design measures
//! bounded by `mu / alpha`. Selection compares the directional derivative of
//! the design criterion at the current matrix with a recursively estimated
//! `(1 - alpha)`-quantile of that derivative; only the current matrix (or its
//! inverse) and two scalars are stored.
//!
//! The crate is `no_std` (with `alloc`) and contains no IO. Stream
//! generators, file formats, traces and the command line live in the
//! `thin-harness` crate.
//!
//! Modules:
//! - [`criteria`]: `log det` and `-tr(M^-q)` criteria, gradients, directional
//!   derivatives and the running information matrix with a maintained inverse.
//! - [`quantile`]: recursive quantile and density estimation.
//! - [`thinner`]: the sequential selection state machine and its quota and
//!   replay modes.
//! - [`scrambler`]: buffer randomization of structured input sequences.
//! - [`baselines`]: sequential exchange and IBOSS, with the IBOSS asymptotic
//!   matrix.
//! - [`oracles`]: optimal bounded designs for analyzed reference problems.

#![no_std]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod baselines;
pub mod criteria;
mod error;
pub mod linalg;
pub mod numeric;
pub mod oracles;
pub mod quantile;
pub mod scrambler;
pub mod thinner;

pub use error::{Error, Result};
