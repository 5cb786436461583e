use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AlphabetSpec, ModelError, ModelParams, SequenceData};

/// Baum-Welch settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Stop once an iteration improves the log-likelihood by less than this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Random initializations tried when no starting point is supplied.
    pub restarts: usize,
    pub seed: u64,
    /// Probability floor applied to re-estimated rows that saw data.
    pub smoothing: f64,
    /// Keep emission rows at their initial values. Requires an explicit init.
    pub fix_emission: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 500,
            restarts: 20,
            seed: 0,
            smoothing: 1e-9,
            fix_emission: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.tolerance > 0.0) {
            return Err(ModelError::InvalidConfig("tolerance must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(ModelError::InvalidConfig("restarts must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(ModelError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if !(0.0..1e-3).contains(&self.smoothing) {
            return Err(ModelError::InvalidConfig("smoothing must lie in [0, 1e-3)".into()));
        }
        Ok(())
    }
}

/// How often each input symbol occurs in the fitted data.
///
/// A zero count means the corresponding rows were never re-estimated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputCounts {
    pub transition: Vec<usize>,
    pub emission: Vec<usize>,
}

impl InputCounts {
    fn tally(spec: &AlphabetSpec, sequences: &[SequenceData]) -> Self {
        let mut counts = InputCounts {
            transition: vec![0; spec.n_transition_inputs],
            emission: vec![0; spec.n_emission_inputs],
        };
        for seq in sequences {
            seq.transition_inputs().iter().for_each(|&u| counts.transition[u] += 1);
            seq.emission_inputs().iter().for_each(|&c| counts.emission[c] += 1);
        }
        counts
    }

    pub fn unobserved_transition_inputs(&self) -> Vec<usize> {
        (0..self.transition.len()).filter(|&u| self.transition[u] == 0).collect()
    }

    pub fn unobserved_emission_inputs(&self) -> Vec<usize> {
        (0..self.emission.len()).filter(|&c| self.emission[c] == 0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: ModelParams,
    /// Log-likelihood before each M-step of the winning restart, ending with
    /// the value of the returned parameters.
    pub log_likelihood_trace: Vec<f64>,
    pub converged: bool,
    pub input_symbol_counts: InputCounts,
    /// Final log-likelihood per restart, by restart index.
    pub restart_log_likelihoods: Vec<f64>,
    pub best_restart: usize,
}

impl FitReport {
    pub fn log_likelihood(&self) -> f64 {
        *self.log_likelihood_trace.last().expect("trace is never empty")
    }
}

struct ExpectedCounts {
    initial: Vec<f64>,
    transition: Vec<Vec<Vec<f64>>>,
    emission: Vec<Vec<Vec<f64>>>,
    log_likelihood: f64,
}

impl ExpectedCounts {
    fn zeros(spec: &AlphabetSpec) -> Self {
        let ns = spec.n_states;
        Self {
            initial: vec![0.0; ns],
            transition: vec![vec![vec![0.0; ns]; ns]; spec.n_transition_inputs],
            emission: vec![vec![vec![0.0; spec.n_outputs]; ns]; spec.n_emission_inputs],
            log_likelihood: 0.0,
        }
    }
}

/// Parameters copied into flat row-major buffers for the inner loops.
struct FlatModel {
    ns: usize,
    no: usize,
    initial: Vec<f64>,
    /// `[u][from][to]`
    transition: Vec<f64>,
    /// `[c][s][y]`
    emission: Vec<f64>,
}

impl FlatModel {
    fn new(params: &ModelParams) -> Self {
        Self {
            ns: params.spec().n_states,
            no: params.spec().n_outputs,
            initial: params.initial().to_vec(),
            transition: params.transition_tensor().iter().flatten().flatten().copied().collect(),
            emission: params.emission_tensor().iter().flatten().flatten().copied().collect(),
        }
    }

    #[inline]
    fn trans(&self, u: usize, from: usize, to: usize) -> f64 {
        self.transition[(u * self.ns + from) * self.ns + to]
    }

    #[inline]
    fn emit(&self, c: usize, s: usize, y: usize) -> f64 {
        self.emission[(c * self.ns + s) * self.no + y]
    }
}

/// Scratch buffers reused across sequences.
#[derive(Default)]
struct Workspace {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    scale: Vec<f64>,
}

/// Expected counts over all sequences.
///
/// Same recursions as `forward_scaled` / `backward_scaled`, on flat buffers.
fn e_step(params: &ModelParams, sequences: &[SequenceData]) -> Result<ExpectedCounts, ModelError> {
    let model = FlatModel::new(params);
    let ns = model.ns;
    let mut acc = ExpectedCounts::zeros(params.spec());
    let mut ws = Workspace::default();

    for seq in sequences {
        let t_len = seq.len();
        let outputs = seq.outputs();
        let cins = seq.emission_inputs();
        let eins = seq.transition_inputs();
        ws.alpha.clear();
        ws.alpha.resize(t_len * ns, 0.0);
        ws.beta.clear();
        ws.beta.resize(t_len * ns, 1.0);
        ws.scale.clear();
        ws.scale.resize(t_len, 0.0);

        // Forward.
        for t in 0..t_len {
            let (done, rest) = ws.alpha.split_at_mut(t * ns);
            let cur = &mut rest[..ns];
            for (to, a) in cur.iter_mut().enumerate() {
                let prior = if t == 0 {
                    model.initial[to]
                } else {
                    let prev = &done[(t - 1) * ns..];
                    (0..ns).map(|from| prev[from] * model.trans(eins[t - 1], from, to)).sum()
                };
                *a = prior * model.emit(cins[t], to, outputs[t]);
            }
            let total: f64 = cur.iter().sum();
            if !(total > 0.0) || !total.is_finite() {
                return Err(ModelError::ImpossibleSequence { step: t + 1 });
            }
            cur.iter_mut().for_each(|a| *a /= total);
            ws.scale[t] = total;
            acc.log_likelihood += total.ln();
        }

        // Backward, accumulating transition counts on the way.
        for t in (0..t_len.saturating_sub(1)).rev() {
            let u = eins[t];
            let scale = ws.scale[t + 1];
            let (head, tail) = ws.beta.split_at_mut((t + 1) * ns);
            let next = &tail[..ns];
            let cur = &mut head[t * ns..];
            let alpha = &ws.alpha[t * ns..(t + 1) * ns];
            let counts = &mut acc.transition[u];
            for from in 0..ns {
                let mut b = 0.0;
                for to in 0..ns {
                    let w = model.trans(u, from, to) * model.emit(cins[t + 1], to, outputs[t + 1]) * next[to] / scale;
                    b += w;
                    counts[from][to] += alpha[from] * w;
                }
                cur[from] = b;
            }
        }

        // State posteriors.
        for t in 0..t_len {
            let a = &ws.alpha[t * ns..(t + 1) * ns];
            let b = &ws.beta[t * ns..(t + 1) * ns];
            let total: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            for s in 0..ns {
                let g = a[s] * b[s] / total;
                if t == 0 {
                    acc.initial[s] += g;
                }
                acc.emission[cins[t]][s][outputs[t]] += g;
            }
        }
    }
    Ok(acc)
}

/// Normalizes a row of expected counts, keeping `previous` when it saw no mass.
fn reestimate_row(counts: &[f64], previous: &[f64], floor: f64) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    if !(total > 0.0) {
        return previous.to_vec();
    }
    let mut row: Vec<f64> = counts.iter().map(|c| c / total).collect();
    if floor > 0.0 && row.iter().any(|&p| p < floor) {
        row.iter_mut().for_each(|p| *p = p.max(floor));
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
    }
    row
}

fn m_step(current: &ModelParams, counts: &ExpectedCounts, config: &FitConfig) -> ModelParams {
    let floor = config.smoothing;
    let initial = reestimate_row(&counts.initial, current.initial(), floor);
    let transition = counts
        .transition
        .iter()
        .zip(current.transition_tensor())
        .map(|(c_tab, p_tab)| {
            c_tab
                .iter()
                .zip(p_tab)
                .map(|(c, p)| reestimate_row(c, p, floor))
                .collect()
        })
        .collect();
    let emission = if config.fix_emission {
        current.emission_tensor().to_vec()
    } else {
        counts
            .emission
            .iter()
            .zip(current.emission_tensor())
            .map(|(c_tab, p_tab)| {
                c_tab
                    .iter()
                    .zip(p_tab)
                    .map(|(c, p)| reestimate_row(c, p, floor))
                    .collect()
            })
            .collect()
    };
    ModelParams::new_unchecked(*current.spec(), initial, transition, emission)
}

struct RunResult {
    params: ModelParams,
    trace: Vec<f64>,
    converged: bool,
}

fn run_em(
    init: ModelParams,
    sequences: &[SequenceData],
    config: &FitConfig,
) -> Result<RunResult, ModelError> {
    let mut params = init;
    let mut counts = e_step(&params, sequences)?;
    let mut trace = vec![counts.log_likelihood];
    let mut converged = false;

    for _ in 0..config.max_iterations {
        let next = m_step(&params, &counts, config);
        let next_counts = e_step(&next, sequences)?;
        let improvement = next_counts.log_likelihood - counts.log_likelihood;
        trace.push(next_counts.log_likelihood);
        params = next;
        counts = next_counts;
        if improvement < config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(RunResult {
        params,
        trace,
        converged,
    })
}

/// Multi-sequence Baum-Welch with input-conditioned expected counts.
///
/// Without `init`, `config.restarts` random starting points are fitted (in
/// parallel) and the run with the highest final log-likelihood wins; ties go
/// to the lowest restart index. With `init`, a single run starts from it.
pub fn baum_welch(
    spec: &AlphabetSpec,
    sequences: &[SequenceData],
    config: &FitConfig,
    init: Option<&ModelParams>,
) -> Result<FitReport, ModelError> {
    config.validate()?;
    spec.validate()?;
    if sequences.is_empty() {
        return Err(ModelError::NoSequences);
    }
    if let Some(p) = init {
        p.validate()?;
        if p.spec() != spec {
            return Err(ModelError::InconsistentAlphabet);
        }
    }
    for seq in sequences {
        seq.check_alphabet(spec).map_err(|_| ModelError::InconsistentAlphabet)?;
    }
    if config.fix_emission && init.is_none() {
        return Err(ModelError::InvalidConfig(
            "fix_emission requires an explicit initialization".into(),
        ));
    }

    let starts: Vec<ModelParams> = match init {
        Some(p) => vec![p.clone()],
        None => (0..config.restarts)
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(r as u64);
                ModelParams::random(*spec, &mut rng)
            })
            .collect::<Result<_, _>>()?,
    };

    let runs: Vec<RunResult> = starts
        .into_par_iter()
        .map(|start| run_em(start, sequences, config))
        .collect::<Result<_, _>>()?;

    let restart_log_likelihoods: Vec<f64> = runs.iter().map(|r| *r.trace.last().unwrap()).collect();
    let best_restart = restart_log_likelihoods
        .iter()
        .enumerate()
        .fold(0, |best, (i, &ll)| if ll > restart_log_likelihoods[best] { i } else { best });
    let best = runs.into_iter().nth(best_restart).expect("at least one run");

    Ok(FitReport {
        params: best.params,
        log_likelihood_trace: best.trace,
        converged: best.converged,
        input_symbol_counts: InputCounts::tally(spec, sequences),
        restart_log_likelihoods,
        best_restart,
    })
}

impl FitReport {
    /// Whether any transition or emission rows were left at their initial values.
    pub fn has_unidentified_rows(&self) -> bool {
        !self.input_symbol_counts.unobserved_transition_inputs().is_empty()
            || !self.input_symbol_counts.unobserved_emission_inputs().is_empty()
    }
}
