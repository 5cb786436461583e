//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls the library's inference or simulation code; the
//! oracles only read parameter tables.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trust_iohmm::iohmm::{AlphabetSpec, FilterStep, ModelParams, SequenceData};

/// Every hidden path of length `t` over `n` states, as index vectors.
pub fn all_paths(n: usize, t: usize) -> Vec<Vec<usize>> {
    let mut paths = vec![vec![]];
    for _ in 0..t {
        paths = paths
            .into_iter()
            .flat_map(|p| {
                (0..n).map(move |s| {
                    let mut q = p.clone();
                    q.push(s);
                    q
                })
            })
            .collect();
    }
    paths
}

/// Joint probability of a state path and the outputs it emits.
fn path_joint(m: &ModelParams, seq: &SequenceData, path: &[usize]) -> f64 {
    let mut p = m.initial()[path[0]];
    for t in 0..path.len() {
        if t > 0 {
            p *= m.transition(seq.transition_inputs()[t - 1], path[t - 1], path[t]);
        }
        p *= m.emission(seq.emission_inputs()[t], path[t], seq.outputs()[t]);
    }
    p
}

pub struct Enumerated {
    pub likelihood: f64,
    /// P(S_t = s | all outputs).
    pub smoothed: Vec<Vec<f64>>,
}

pub fn enumerate(m: &ModelParams, seq: &SequenceData) -> Enumerated {
    let n = m.spec().n_states;
    let t_len = seq.len();
    let mut likelihood = 0.0;
    let mut smoothed = vec![vec![0.0; n]; t_len];
    for path in all_paths(n, t_len) {
        let p = path_joint(m, seq, &path);
        likelihood += p;
        for (t, &s) in path.iter().enumerate() {
            smoothed[t][s] += p;
        }
    }
    for row in &mut smoothed {
        for v in row.iter_mut() {
            *v /= likelihood;
        }
    }
    Enumerated { likelihood, smoothed }
}

/// Predictive beliefs `P(S_t | steps before t)` for `t = 1 ..= steps.len() + 1`.
pub fn enumerate_predictive(m: &ModelParams, steps: &[FilterStep]) -> Vec<Vec<f64>> {
    let n = m.spec().n_states;
    let mut out = Vec::new();
    for t in 0..=steps.len() {
        // Paths over S_1..S_{t+1}; outputs observed for the first t steps.
        let mut mass = vec![0.0; n];
        for path in all_paths(n, t + 1) {
            let mut p = m.initial()[path[0]];
            for (k, step) in steps[..t].iter().enumerate() {
                p *= m.emission(step.emission_input, path[k], step.output);
                p *= m.transition(step.transition_input, path[k], path[k + 1]);
            }
            mass[path[t]] += p;
        }
        let z: f64 = mass.iter().sum();
        out.push(mass.iter().map(|v| v / z).collect());
    }
    out
}

/// A random sequence whose every output has positive probability under `m`.
pub fn random_sequence(m: &ModelParams, len: usize, rng: &mut ChaCha8Rng) -> SequenceData {
    let spec = *m.spec();
    let emission_inputs: Vec<usize> = (0..len).map(|_| rng.random_range(0..spec.n_emission_inputs)).collect();
    let transition_inputs: Vec<usize> = (0..len - 1).map(|_| rng.random_range(0..spec.n_transition_inputs)).collect();
    let outputs: Vec<usize> = (0..len).map(|_| rng.random_range(0..spec.n_outputs)).collect();
    SequenceData::new(outputs, emission_inputs, transition_inputs).unwrap()
}

pub fn random_model(spec: AlphabetSpec, seed: u64) -> ModelParams {
    ModelParams::random(spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

pub fn steps_of(seq: &SequenceData) -> Vec<FilterStep> {
    (0..seq.len() - 1)
        .map(|t| FilterStep {
            emission_input: seq.emission_inputs()[t],
            output: seq.outputs()[t],
            transition_input: seq.transition_inputs()[t],
        })
        .collect()
}

/// How the enumeration oracle picks the message after the `k`-th failure.
#[derive(Clone, Copy, Debug)]
pub enum OraclePolicy {
    /// Transition-input index of the one strategy used (1..=4).
    Fixed(usize),
    Uniform,
    RoundRobin,
}

impl OraclePolicy {
    /// (transition input, probability) pairs for failure number `k`.
    fn messages(self, k: usize) -> Vec<(usize, f64)> {
        match self {
            OraclePolicy::Fixed(u) => vec![(u, 1.0)],
            OraclePolicy::Uniform => (1..=4).map(|u| (u, 0.25)).collect(),
            OraclePolicy::RoundRobin => vec![(1 + k % 4, 1.0)],
        }
    }
}

/// Exact expected total delivery score over `n_trials`, by summing over
/// every branch of the trial tree.
///
/// Index layout: states 0 = high, 1 = low; outputs 0 = auto, 1 = manual;
/// transition inputs 0 = success, 1..=4 = failure messages, 5 = manual.
pub fn expected_delivery_score(
    m: &ModelParams,
    n_trials: u32,
    success_probability: f64,
    p_high_complexity: f64,
    policy: OraclePolicy,
) -> f64 {
    fn value(m: &ModelParams, trial: u32, n: u32, state: usize, failures: usize, ps: f64, ph: f64, policy: OraclePolicy) -> f64 {
        if trial > n {
            return 0.0;
        }
        let next = |input: usize, failures: usize| -> f64 {
            (0..2)
                .map(|s2| m.transition(input, state, s2) * value(m, trial + 1, n, s2, failures, ps, ph, policy))
                .sum()
        };
        let mut total = 0.0;
        for (c, pc) in [(0usize, 1.0 - ph), (1, ph)] {
            if pc == 0.0 {
                continue;
            }
            let p_auto = m.emission(c, state, 0);
            let manual = 30.0 + next(5, failures);
            let success = 50.0 + next(0, failures);
            let failure: f64 = policy
                .messages(failures)
                .into_iter()
                .map(|(u, pm)| pm * (-100.0 + next(u, failures + 1)))
                .sum();
            total += pc * (p_auto * (ps * success + (1.0 - ps) * failure) + (1.0 - p_auto) * manual);
        }
        total
    }
    (0..2)
        .map(|s| m.initial()[s] * value(m, 1, n_trials, s, 0, success_probability, p_high_complexity, policy))
        .sum()
}

/// Simulates cohorts under each fixed repair strategy until every
/// (complexity, state) action cell and every (event, state) transition cell
/// holds at least `min_samples` observations.
pub fn tally_until(
    params: &ModelParams,
    min_samples: u64,
) -> trust_iohmm::simulator::ConditionalTallies {
    use trust_iohmm::simulator::{simulate_cohort, ConditionalTallies, EnvConfig, MessagePolicy};
    use trust_iohmm::trust::RobotMessage;

    let mut tallies = ConditionalTallies::default();
    let full = |t: &ConditionalTallies, event: usize| t.transitions[event].iter().all(|c| c.1 >= min_samples);
    let mut round = 0u64;
    for (k, message) in RobotMessage::STRATEGIES.iter().enumerate() {
        let policy = MessagePolicy::FixedStrategy(*message);
        while !full(&tallies, k + 1)
            || (k == 3
                && (!full(&tallies, 0)
                    || !full(&tallies, 5)
                    || tallies.actions.iter().flatten().any(|c| c.1 < min_samples)))
        {
            let env = EnvConfig {
                seed: 1_000 + round,
                ..EnvConfig::default()
            };
            for s in simulate_cohort(params, &env, &policy, 2_000).unwrap() {
                tallies.add(&s);
            }
            round += 1;
        }
    }
    tallies
}

/// Largest |empirical - parameter| over all tallied cells.
pub fn max_frequency_error(params: &ModelParams, t: &trust_iohmm::simulator::ConditionalTallies) -> f64 {
    let mut worst: f64 = 0.0;
    for c in 0..2 {
        for s in 0..2 {
            let (hits, n) = t.actions[c][s];
            worst = worst.max((hits as f64 / n as f64 - params.emission(c, s, 0)).abs());
        }
    }
    for e in 0..6 {
        for s in 0..2 {
            let (hits, n) = t.transitions[e][s];
            worst = worst.max((hits as f64 / n as f64 - params.transition(e, s, 0)).abs());
        }
    }
    worst
}
