//! Trust-modulated human behavior modeling for robot-assisted delivery.
//!
//! - [`iohmm`]: generic discrete input-output HMM (scaled forward/backward,
//!   predictive filtering, multi-sequence Baum-Welch, sampling, label
//!   canonicalization).
//! - [`trust`]: the binary-trust model, its reference parameters, rewards and
//!   the canonical session-log format.
//! - [`grounding`]: logistic map from averaged self-reports to filtered trust.
//! - [`simulator`]: synthetic participants and Monte Carlo policy comparison.
//! - [`analysis`]: the batch commands behind the `trust-iohmm` binary.
//! - [`service`]: HTTP service for live trials with online trust estimates.

pub mod analysis;
pub mod grounding;
pub mod iohmm;
pub mod service;
pub mod simulator;
pub mod trust;
