use serde::{Deserialize, Serialize};

use super::{ModelError, ModelParams, SequenceData};

/// Probability vector over hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probs: Vec<f64>) -> Self {
        Belief(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, state: usize) -> f64 {
        self.0[state]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Output of the scaled forward recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    /// Normalized forward variables; `alphas[t]` is the filtered posterior at step `t`.
    pub alphas: Vec<Vec<f64>>,
    /// Per-step normalizers; their logs sum to the log-likelihood.
    pub scales: Vec<f64>,
    pub log_likelihood: f64,
}

/// Smoothed state posteriors for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    pub gamma: Vec<Vec<f64>>,
    pub log_likelihood: f64,
}

/// One fully observed step for the predictive filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStep {
    pub emission_input: usize,
    pub output: usize,
    /// Input driving the move into the next step.
    pub transition_input: usize,
}

fn check(params: &ModelParams, seq: &SequenceData) -> Result<(), ModelError> {
    seq.check_alphabet(params.spec())
}

/// Normalizes in place and returns the normalizer; errors on zero mass.
fn normalize(v: &mut [f64], step: usize) -> Result<f64, ModelError> {
    let total: f64 = v.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(ModelError::ImpossibleSequence { step });
    }
    v.iter_mut().for_each(|x| *x /= total);
    Ok(total)
}

/// Scaled forward pass. Step numbers in errors are 1-based.
pub fn forward_scaled(params: &ModelParams, seq: &SequenceData) -> Result<ForwardPass, ModelError> {
    check(params, seq)?;
    let ns = params.spec().n_states;
    let outputs = seq.outputs();
    let cins = seq.emission_inputs();
    let eins = seq.transition_inputs();

    let mut alphas = Vec::with_capacity(seq.len());
    let mut scales = Vec::with_capacity(seq.len());

    let mut alpha: Vec<f64> = (0..ns)
        .map(|s| params.initial()[s] * params.emission(cins[0], s, outputs[0]))
        .collect();
    scales.push(normalize(&mut alpha, 1)?);
    alphas.push(alpha);

    for t in 1..seq.len() {
        let prev = &alphas[t - 1];
        let u = eins[t - 1];
        let mut alpha: Vec<f64> = (0..ns)
            .map(|to| {
                let inflow: f64 = (0..ns).map(|from| prev[from] * params.transition(u, from, to)).sum();
                inflow * params.emission(cins[t], to, outputs[t])
            })
            .collect();
        scales.push(normalize(&mut alpha, t + 1)?);
        alphas.push(alpha);
    }

    let log_likelihood = scales.iter().map(|c| c.ln()).sum();
    Ok(ForwardPass {
        alphas,
        scales,
        log_likelihood,
    })
}

/// Scaled backward pass using the forward scale factors.
pub fn backward_scaled(
    params: &ModelParams,
    seq: &SequenceData,
    scales: &[f64],
) -> Result<Vec<Vec<f64>>, ModelError> {
    check(params, seq)?;
    let t_len = seq.len();
    if scales.len() != t_len {
        return Err(ModelError::ScaleMismatch {
            expected: t_len,
            actual: scales.len(),
        });
    }
    let ns = params.spec().n_states;
    let outputs = seq.outputs();
    let cins = seq.emission_inputs();
    let eins = seq.transition_inputs();

    let mut betas = vec![vec![1.0; ns]; t_len];
    for t in (0..t_len - 1).rev() {
        let u = eins[t];
        let scale = scales[t + 1];
        if !(scale > 0.0) {
            return Err(ModelError::ImpossibleSequence { step: t + 2 });
        }
        let (head, tail) = betas.split_at_mut(t + 1);
        let next = &tail[0];
        for (from, b) in head[t].iter_mut().enumerate() {
            *b = (0..ns)
                .map(|to| {
                    params.transition(u, from, to)
                        * params.emission(cins[t + 1], to, outputs[t + 1])
                        * next[to]
                })
                .sum::<f64>()
                / scale;
        }
    }
    Ok(betas)
}

/// Smoothed posteriors P(S_t | all outputs, all inputs).
pub fn smooth(params: &ModelParams, seq: &SequenceData) -> Result<Smoothed, ModelError> {
    let fwd = forward_scaled(params, seq)?;
    let betas = backward_scaled(params, seq, &fwd.scales)?;
    let gamma = fwd
        .alphas
        .iter()
        .zip(&betas)
        .enumerate()
        .map(|(t, (a, b))| {
            let mut g: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
            normalize(&mut g, t + 1).map(|_| g)
        })
        .collect::<Result<_, _>>()?;
    Ok(Smoothed {
        gamma,
        log_likelihood: fwd.log_likelihood,
    })
}

fn condition(params: &ModelParams, prior: &[f64], c: usize, y: usize, step: usize) -> Result<Vec<f64>, ModelError> {
    let mut post: Vec<f64> = prior
        .iter()
        .enumerate()
        .map(|(s, p)| p * params.emission(c, s, y))
        .collect();
    normalize(&mut post, step)?;
    Ok(post)
}

fn predict(params: &ModelParams, post: &[f64], u: usize) -> Vec<f64> {
    let ns = post.len();
    (0..ns)
        .map(|to| (0..ns).map(|from| post[from] * params.transition(u, from, to)).sum())
        .collect()
}

/// Predictive beliefs `b_1 ..= b_{n+1}` for `n` fully observed steps.
///
/// `b_1` is the initial distribution; `b_{t+1}` is the belief at the start of
/// step `t + 1` after conditioning on step `t`'s output and applying its
/// transition input. Each belief is taken *before* that step's output is seen.
pub fn filter_predictive(params: &ModelParams, steps: &[FilterStep]) -> Result<Vec<Belief>, ModelError> {
    let mut beliefs = Vec::with_capacity(steps.len() + 1);
    let mut belief = Belief(params.initial().to_vec());
    for (i, step) in steps.iter().enumerate() {
        let next = advance(params, &belief, step, i)?;
        beliefs.push(std::mem::replace(&mut belief, next));
    }
    beliefs.push(belief);
    Ok(beliefs)
}

/// One step of [`filter_predictive`]: condition `belief` on the step's
/// observation, then propagate through its transition input.
pub fn filter_update(params: &ModelParams, belief: &Belief, step: &FilterStep) -> Result<Belief, ModelError> {
    advance(params, belief, step, 0)
}

fn advance(params: &ModelParams, belief: &Belief, step: &FilterStep, i: usize) -> Result<Belief, ModelError> {
    let spec = params.spec();
    if belief.0.len() != spec.n_states {
        return Err(ModelError::DimensionMismatch {
            what: "belief",
            expected: spec.n_states,
            actual: belief.0.len(),
        });
    }
    for (stream, value, bound) in [
        ("emission_inputs", step.emission_input, spec.n_emission_inputs),
        ("outputs", step.output, spec.n_outputs),
        ("transition_inputs", step.transition_input, spec.n_transition_inputs),
    ] {
        if value >= bound {
            return Err(ModelError::SymbolOutOfRange {
                stream,
                position: i,
                value,
                bound,
            });
        }
    }
    let post = condition(params, &belief.0, step.emission_input, step.output, i + 1)?;
    Ok(Belief(predict(params, &post, step.transition_input)))
}

/// Predictive beliefs `b_1 ..= b_T` for a sequence.
///
/// The final step has no transition input, so no belief beyond `T` is produced.
pub fn filter_sequence(params: &ModelParams, seq: &SequenceData) -> Result<Vec<Belief>, ModelError> {
    check(params, seq)?;
    let steps: Vec<FilterStep> = (0..seq.len() - 1)
        .map(|t| FilterStep {
            emission_input: seq.emission_inputs()[t],
            output: seq.outputs()[t],
            transition_input: seq.transition_inputs()[t],
        })
        .collect();
    let mut beliefs = filter_predictive(params, &steps)?;
    let last = seq.len() - 1;
    // Surface an impossible final observation the same way as earlier steps.
    condition(
        params,
        beliefs[last].probs(),
        seq.emission_inputs()[last],
        seq.outputs()[last],
        seq.len(),
    )?;
    beliefs.truncate(seq.len());
    Ok(beliefs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iohmm::AlphabetSpec;

    fn spec() -> AlphabetSpec {
        AlphabetSpec::new(2, 1, 1, 2).unwrap()
    }

    fn deterministic() -> ModelParams {
        ModelParams::new(
            spec(),
            vec![1.0, 0.0],
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
        )
        .unwrap()
    }

    #[test]
    fn probability_one_sequence_has_zero_log_likelihood() {
        let seq = SequenceData::new(vec![0, 0, 0], vec![0, 0, 0], vec![0, 0]).unwrap();
        let fwd = forward_scaled(&deterministic(), &seq).unwrap();
        assert_eq!(fwd.log_likelihood, 0.0);
    }

    #[test]
    fn impossible_sequence_names_the_step() {
        let seq = SequenceData::new(vec![0, 0, 1], vec![0, 0, 0], vec![0, 0]).unwrap();
        assert_eq!(
            forward_scaled(&deterministic(), &seq).unwrap_err(),
            ModelError::ImpossibleSequence { step: 3 }
        );
        assert_eq!(
            filter_sequence(&deterministic(), &seq).unwrap_err(),
            ModelError::ImpossibleSequence { step: 3 }
        );
    }

    #[test]
    fn single_step_backward_is_ones() {
        let p = ModelParams::uniform(spec()).unwrap();
        let seq = SequenceData::new(vec![1], vec![0], vec![]).unwrap();
        let fwd = forward_scaled(&p, &seq).unwrap();
        assert_eq!(backward_scaled(&p, &seq, &fwd.scales).unwrap(), vec![vec![1.0, 1.0]]);
    }

    #[test]
    fn backward_rejects_foreign_scales() {
        let p = ModelParams::uniform(spec()).unwrap();
        let seq = SequenceData::new(vec![1, 0], vec![0, 0], vec![0]).unwrap();
        assert!(matches!(
            backward_scaled(&p, &seq, &[1.0]),
            Err(ModelError::ScaleMismatch { expected: 2, actual: 1 })
        ));
    }

    #[test]
    fn empty_prefix_yields_initial() {
        let p = deterministic();
        let beliefs = filter_predictive(&p, &[]).unwrap();
        assert_eq!(beliefs, vec![Belief::new(vec![1.0, 0.0])]);
    }

    #[test]
    fn filter_rejects_symbol_outside_alphabet() {
        let p = deterministic();
        let step = FilterStep {
            emission_input: 0,
            output: 0,
            transition_input: 3,
        };
        assert!(matches!(
            filter_predictive(&p, &[step]),
            Err(ModelError::SymbolOutOfRange { stream: "transition_inputs", .. })
        ));
    }
}
