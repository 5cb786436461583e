//! Generic discrete Input-Output Hidden Markov Model.
//!
//! Every alphabet is a small range of integer indices. The transition
//! into step `t + 1` is conditioned on a *transition input* observed at step
//! `t`, while the output at step `t` is conditioned on an *emission input*
//! observed at the same step. The two input streams are kept separate so a
//! model can condition its dynamics and its observations on different
//! exogenous signals.
//!
//! Inference uses per-step scaling; log-likelihoods are accumulated from the
//! scale factors.

mod canonical;
mod fit;
mod inference;
mod params;
mod sample;

use std::fmt;

use thiserror::Error;

pub use canonical::{canonicalize_states, Canonicalized, OrderingRule};
pub use fit::{baum_welch, FitConfig, FitReport, InputCounts};
pub use inference::{
    backward_scaled, filter_predictive, filter_sequence, filter_update, forward_scaled, smooth, Belief,
    FilterStep, ForwardPass, Smoothed,
};
pub use params::{AlphabetSpec, ModelParams, SequenceData, ROW_SUM_TOLERANCE};
pub use sample::{sample_sequence, SampledPath};
pub(crate) use sample::draw_index;

/// Which parameter table an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tensor {
    Initial,
    Transition,
    Emission,
}

impl fmt::Display for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tensor::Initial => "initial",
            Tensor::Transition => "transition",
            Tensor::Emission => "emission",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("alphabet size {0} must be at least 1")]
    EmptyAlphabet(&'static str),
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{tensor} row ({row}) sums to {sum}, expected 1")]
    RowSum { tensor: Tensor, row: String, sum: f64 },
    #[error("{tensor} row ({row}) entry {index} = {value} is outside [0, 1]")]
    OutOfRange {
        tensor: Tensor,
        row: String,
        index: usize,
        value: f64,
    },
    #[error("sequence must contain at least one step")]
    EmptySequence,
    #[error(
        "sequence lengths inconsistent: {outputs} outputs, {emission_inputs} emission inputs, \
         {transition_inputs} transition inputs (expected T, T, T-1)"
    )]
    SequenceLength {
        outputs: usize,
        emission_inputs: usize,
        transition_inputs: usize,
    },
    #[error("{stream}[{position}] = {value} is outside the alphabet (size {bound})")]
    SymbolOutOfRange {
        stream: &'static str,
        position: usize,
        value: usize,
        bound: usize,
    },
    #[error("sequence has zero probability under the model at step {step}")]
    ImpossibleSequence { step: usize },
    #[error("scale factors do not match the sequence: {expected} steps, {actual} factors")]
    ScaleMismatch { expected: usize, actual: usize },
    #[error("no sequences to fit")]
    NoSequences,
    #[error("models or sequences use different alphabets")]
    InconsistentAlphabet,
    #[error("invalid state permutation {0:?}")]
    InvalidPermutation(Vec<usize>),
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
}
