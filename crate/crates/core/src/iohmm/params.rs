use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, Tensor};

/// Tolerance on every probability row sum.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Sizes of the four discrete alphabets of an input-output HMM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlphabetSpec {
    pub n_states: usize,
    pub n_transition_inputs: usize,
    pub n_emission_inputs: usize,
    pub n_outputs: usize,
}

impl AlphabetSpec {
    pub fn new(
        n_states: usize,
        n_transition_inputs: usize,
        n_emission_inputs: usize,
        n_outputs: usize,
    ) -> Result<Self, ModelError> {
        let spec = Self {
            n_states,
            n_transition_inputs,
            n_emission_inputs,
            n_outputs,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, n) in [
            ("n_states", self.n_states),
            ("n_transition_inputs", self.n_transition_inputs),
            ("n_emission_inputs", self.n_emission_inputs),
            ("n_outputs", self.n_outputs),
        ] {
            if n == 0 {
                return Err(ModelError::EmptyAlphabet(name));
            }
        }
        Ok(())
    }
}

/// Initial distribution plus input-conditioned transition and emission tables.
///
/// Layout:
/// - `initial[s]` = P(S_1 = s)
/// - `transition[u][s][s2]` = P(S_{t+1} = s2 | S_t = s, transition input u)
/// - `emission[c][s][y]` = P(y_t = y | S_t = s, emission input c)
///
/// Values are immutable once constructed; every constructor validates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    spec: AlphabetSpec,
    initial: Vec<f64>,
    transition: Vec<Vec<Vec<f64>>>,
    emission: Vec<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    spec: AlphabetSpec,
    initial: Vec<f64>,
    transition: Vec<Vec<Vec<f64>>>,
    emission: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = ModelError;

    fn try_from(raw: RawParams) -> Result<Self, Self::Error> {
        ModelParams::new(raw.spec, raw.initial, raw.transition, raw.emission)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams {
            spec: p.spec,
            initial: p.initial,
            transition: p.transition,
            emission: p.emission,
        }
    }
}

impl ModelParams {
    pub fn new(
        spec: AlphabetSpec,
        initial: Vec<f64>,
        transition: Vec<Vec<Vec<f64>>>,
        emission: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self, ModelError> {
        let params = Self::new_unchecked(spec, initial, transition, emission);
        params.validate()?;
        Ok(params)
    }

    pub(crate) fn new_unchecked(
        spec: AlphabetSpec,
        initial: Vec<f64>,
        transition: Vec<Vec<Vec<f64>>>,
        emission: Vec<Vec<Vec<f64>>>,
    ) -> Self {
        Self {
            spec,
            initial,
            transition,
            emission,
        }
    }

    /// Every row uniform.
    pub fn uniform(spec: AlphabetSpec) -> Result<Self, ModelError> {
        spec.validate()?;
        let ns = spec.n_states;
        let no = spec.n_outputs;
        Self::new(
            spec,
            vec![1.0 / ns as f64; ns],
            vec![vec![vec![1.0 / ns as f64; ns]; ns]; spec.n_transition_inputs],
            vec![vec![vec![1.0 / no as f64; no]; ns]; spec.n_emission_inputs],
        )
    }

    /// Random parameters with every row drawn as normalized uniform variates.
    pub fn random<R: Rng + ?Sized>(spec: AlphabetSpec, rng: &mut R) -> Result<Self, ModelError> {
        spec.validate()?;
        let ns = spec.n_states;
        let no = spec.n_outputs;
        let initial = random_row(ns, rng);
        let transition = (0..spec.n_transition_inputs)
            .map(|_| (0..ns).map(|_| random_row(ns, rng)).collect())
            .collect();
        let emission = (0..spec.n_emission_inputs)
            .map(|_| (0..ns).map(|_| random_row(no, rng)).collect())
            .collect();
        Self::new(spec, initial, transition, emission)
    }

    pub fn spec(&self) -> &AlphabetSpec {
        &self.spec
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Row of next-state probabilities for `(input, from)`.
    pub fn transition_row(&self, input: usize, from: usize) -> &[f64] {
        &self.transition[input][from]
    }

    pub fn transition(&self, input: usize, from: usize, to: usize) -> f64 {
        self.transition[input][from][to]
    }

    /// Row of output probabilities for `(input, state)`.
    pub fn emission_row(&self, input: usize, state: usize) -> &[f64] {
        &self.emission[input][state]
    }

    pub fn emission(&self, input: usize, state: usize, output: usize) -> f64 {
        self.emission[input][state][output]
    }

    pub fn transition_tensor(&self) -> &[Vec<Vec<f64>>] {
        &self.transition
    }

    pub fn emission_tensor(&self) -> &[Vec<Vec<f64>>] {
        &self.emission
    }

    /// Checks shapes, entry ranges and row sums.
    pub fn validate(&self) -> Result<(), ModelError> {
        let spec = &self.spec;
        spec.validate()?;
        let ns = spec.n_states;

        check_len("initial", ns, self.initial.len())?;
        check_row(Tensor::Initial, "initial".to_string(), &self.initial)?;

        check_len("transition inputs", spec.n_transition_inputs, self.transition.len())?;
        for (u, table) in self.transition.iter().enumerate() {
            check_len("transition source states", ns, table.len())?;
            for (s, row) in table.iter().enumerate() {
                check_len("transition target states", ns, row.len())?;
                check_row(Tensor::Transition, format!("input {u}, state {s}"), row)?;
            }
        }

        check_len("emission inputs", spec.n_emission_inputs, self.emission.len())?;
        for (c, table) in self.emission.iter().enumerate() {
            check_len("emission states", ns, table.len())?;
            for (s, row) in table.iter().enumerate() {
                check_len("emission outputs", spec.n_outputs, row.len())?;
                check_row(Tensor::Emission, format!("input {c}, state {s}"), row)?;
            }
        }
        Ok(())
    }

    /// Relabels states so that new state `i` is old state `perm[i]`.
    pub fn permute_states(&self, perm: &[usize]) -> Result<Self, ModelError> {
        let ns = self.spec.n_states;
        let mut seen = vec![false; ns];
        if perm.len() != ns || perm.iter().any(|&p| p >= ns || std::mem::replace(&mut seen[p], true)) {
            return Err(ModelError::InvalidPermutation(perm.to_vec()));
        }
        let initial = perm.iter().map(|&old| self.initial[old]).collect();
        let transition = self
            .transition
            .iter()
            .map(|table| {
                perm.iter()
                    .map(|&from| perm.iter().map(|&to| table[from][to]).collect())
                    .collect()
            })
            .collect();
        let emission = self
            .emission
            .iter()
            .map(|table| perm.iter().map(|&s| table[s].clone()).collect())
            .collect();
        Ok(Self::new_unchecked(self.spec, initial, transition, emission))
    }

    /// Largest elementwise absolute difference over all three tables.
    pub fn max_abs_deviation(&self, other: &ModelParams) -> Result<f64, ModelError> {
        if self.spec != other.spec {
            return Err(ModelError::InconsistentAlphabet);
        }
        let flat = |p: &ModelParams| -> Vec<f64> {
            p.initial
                .iter()
                .chain(p.transition.iter().flatten().flatten())
                .chain(p.emission.iter().flatten().flatten())
                .copied()
                .collect()
        };
        Ok(flat(self)
            .iter()
            .zip(flat(other))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

fn random_row<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    // Keep draws away from zero so no row starts with a structural zero.
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<(), ModelError> {
    if expected != actual {
        return Err(ModelError::DimensionMismatch {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}

fn check_row(tensor: Tensor, row: String, values: &[f64]) -> Result<(), ModelError> {
    if let Some((i, &v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(ModelError::OutOfRange {
            tensor,
            row,
            index: i,
            value: v,
        });
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(ModelError::RowSum { tensor, row, sum });
    }
    Ok(())
}

/// One IOHMM observation sequence.
///
/// `transition_inputs[t]` drives the move from step `t` into step `t + 1`, so
/// it is one element shorter than the other two streams.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceData {
    outputs: Vec<usize>,
    emission_inputs: Vec<usize>,
    transition_inputs: Vec<usize>,
}

impl SequenceData {
    pub fn new(
        outputs: Vec<usize>,
        emission_inputs: Vec<usize>,
        transition_inputs: Vec<usize>,
    ) -> Result<Self, ModelError> {
        let t = outputs.len();
        if t == 0 {
            return Err(ModelError::EmptySequence);
        }
        if emission_inputs.len() != t || transition_inputs.len() != t - 1 {
            return Err(ModelError::SequenceLength {
                outputs: t,
                emission_inputs: emission_inputs.len(),
                transition_inputs: transition_inputs.len(),
            });
        }
        Ok(Self {
            outputs,
            emission_inputs,
            transition_inputs,
        })
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    pub fn emission_inputs(&self) -> &[usize] {
        &self.emission_inputs
    }

    pub fn transition_inputs(&self) -> &[usize] {
        &self.transition_inputs
    }

    /// Checks every symbol against the alphabet sizes.
    pub fn check_alphabet(&self, spec: &AlphabetSpec) -> Result<(), ModelError> {
        check_symbols("outputs", &self.outputs, spec.n_outputs)?;
        check_symbols("emission_inputs", &self.emission_inputs, spec.n_emission_inputs)?;
        check_symbols("transition_inputs", &self.transition_inputs, spec.n_transition_inputs)
    }
}

fn check_symbols(stream: &'static str, values: &[usize], bound: usize) -> Result<(), ModelError> {
    match values.iter().position(|&v| v >= bound) {
        Some(position) => Err(ModelError::SymbolOutOfRange {
            stream,
            position,
            value: values[position],
            bound,
        }),
        None => Ok(()),
    }
}
