//! Channel simulation, CGAN-based channel estimation and classical baselines
//! for RIS-assisted integrated sensing and communication (ISAC) systems.
//!
//! The crate is organized bottom-up:
//!
//! * [`channel`] draws sensing, communication and self-interference channels.
//! * [`pilot`] builds DFT pilots and RIS phases and synthesizes observations.
//! * [`dataset`] turns observations into real-valued training pairs.
//! * [`nn`] is a small network engine with exact gradients.
//! * [`cgan`] builds and trains the sensing and communication estimators.
//! * [`baselines`], [`metrics`] and [`complexity`] provide LS/FFN/ELM
//!   comparisons, NMSE evaluation and closed-form operation counts.
//! * [`harness`] wires everything into seeded, reproducible experiments.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cgan;
pub mod channel;
pub mod checkpoint;
pub mod complexity;
mod container;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod pilot;
pub mod rng;

pub use error::{Error, Result};
