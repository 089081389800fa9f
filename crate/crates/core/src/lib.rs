//! Event-triggered multi-agent safety filter that shares corrective control
//! effort through an auction over avoidance credit.
//!
//! The pieces, bottom up:
//!
//! - [`dynamics`]: constant-speed unicycles and RK4 stepping.
//! - [`safety`]: pairwise distance barriers, log-sum-exp aggregation and the
//!   second-order barrier constraint `A u >= b`.
//! - [`auction`]: progressive second price allocation, VCG payments and
//!   best-response dynamics.
//! - [`allocation`]: credit-to-correction mapping, pseudo-inverse control
//!   synthesis and the QP baseline.
//! - [`engine`]: the closed-loop simulation with event triggering.
//! - [`config`], [`output`]: scenario files and run artifacts.
//! - [`verify`]: randomised oracle checks, also exposed by the CLI.
//! - [`cli`]: the `avoidance-credit` command.

pub mod allocation;
pub mod auction;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod output;
pub mod safety;
pub mod verify;

pub use error::{Error, Result};
