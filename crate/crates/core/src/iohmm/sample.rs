use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelError, ModelParams};

/// Hidden path and outputs drawn from a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledPath {
    pub states: Vec<usize>,
    pub outputs: Vec<usize>,
}

/// Inverse-CDF draw from a probability row given `u` in `[0, 1)`.
///
/// Never returns an index with zero probability, even when rounding leaves
/// the cumulative sum slightly below one.
pub(crate) fn draw_index(probs: &[f64], u: f64) -> usize {
    let mut cumulative = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Ancestral sampling of states and outputs for the given input streams.
///
/// `transition_inputs` must be one shorter than `emission_inputs` (or empty
/// when both are). Bit-reproducible for a fixed seed.
pub fn sample_sequence(
    params: &ModelParams,
    emission_inputs: &[usize],
    transition_inputs: &[usize],
    seed: u64,
) -> Result<SampledPath, ModelError> {
    params.validate()?;
    let t_len = emission_inputs.len();
    if transition_inputs.len() != t_len.saturating_sub(1) {
        return Err(ModelError::SequenceLength {
            outputs: t_len,
            emission_inputs: t_len,
            transition_inputs: transition_inputs.len(),
        });
    }
    let spec = params.spec();
    for (stream, values, bound) in [
        ("emission_inputs", emission_inputs, spec.n_emission_inputs),
        ("transition_inputs", transition_inputs, spec.n_transition_inputs),
    ] {
        if let Some(position) = values.iter().position(|&v| v >= bound) {
            return Err(ModelError::SymbolOutOfRange {
                stream,
                position,
                value: values[position],
                bound,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = Vec::with_capacity(t_len);
    let mut outputs = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let state = if t == 0 {
            draw_index(params.initial(), rng.random())
        } else {
            draw_index(params.transition_row(transition_inputs[t - 1], states[t - 1]), rng.random())
        };
        states.push(state);
        outputs.push(draw_index(params.emission_row(emission_inputs[t], state), rng.random()));
    }
    Ok(SampledPath { states, outputs })
}
