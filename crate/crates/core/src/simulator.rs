//! Synthetic participants interacting with a delivery robot.
//!
//! Each trial consumes exactly five uniform draws (complexity, trust state,
//! action, outcome, message) whether or not they are used, so two runs with
//! the same seed share every random stream regardless of the choices a
//! message policy makes. [`evaluate_policy`] relies on this for common random
//! numbers.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::iohmm::ModelParams;
use crate::trust::{
    trust_alphabet, Complexity, DomainError, HumanAction, Outcome, RobotMessage, SessionLog,
    TrialRecord, TransitionEvent, HIGH_TRUST,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid environment: {0}")]
    InvalidConfig(String),
    #[error("parameters do not use the trust model's alphabet")]
    WrongAlphabet,
    #[error("scripted message policy exhausted at trial {trial}")]
    ScriptExhausted { trial: u32 },
    #[error("unknown policy {0:?}; expected fixed:<short|long|apology|denial>, uniform, round-robin or scripted:<list>")]
    UnknownPolicy(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// How trial complexities are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexitySchedule {
    /// Independent draws, high complexity with this probability.
    Iid { p_high: f64 },
    /// Explicit per-trial complexities; must cover every trial.
    Fixed(Vec<Complexity>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub success_probability: f64,
    pub complexity: ComplexitySchedule,
    pub n_trials: u32,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            success_probability: 0.75,
            complexity: ComplexitySchedule::Iid { p_high: 0.5 },
            n_trials: 60,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.success_probability) {
            return Err(SimError::InvalidConfig(format!(
                "success_probability {} outside [0, 1]",
                self.success_probability
            )));
        }
        if self.n_trials == 0 {
            return Err(SimError::InvalidConfig("n_trials must be at least 1".into()));
        }
        match &self.complexity {
            ComplexitySchedule::Iid { p_high } if !(0.0..=1.0).contains(p_high) => Err(
                SimError::InvalidConfig(format!("p_high_complexity {p_high} outside [0, 1]")),
            ),
            ComplexitySchedule::Fixed(s) if s.len() < self.n_trials as usize => Err(SimError::InvalidConfig(
                format!("complexity schedule has {} entries for {} trials", s.len(), self.n_trials),
            )),
            _ => Ok(()),
        }
    }

    /// Complexity of 1-based `trial` given its uniform draw.
    pub fn complexity_for(&self, trial: u32, u: f64) -> Complexity {
        match &self.complexity {
            ComplexitySchedule::Iid { p_high } => {
                if u < *p_high {
                    Complexity::High
                } else {
                    Complexity::Low
                }
            }
            ComplexitySchedule::Fixed(s) => s[(trial - 1) as usize],
        }
    }
}

/// Which repair message the robot gives after a failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessagePolicy {
    FixedStrategy(RobotMessage),
    UniformRandom,
    /// Cycles short, long, apology, denial.
    RoundRobin,
    Scripted(Vec<RobotMessage>),
}

impl fmt::Display for MessagePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MessagePolicy::FixedStrategy(m) => write!(f, "fixed:{}", m.code()),
            MessagePolicy::UniformRandom => f.write_str("uniform"),
            MessagePolicy::RoundRobin => f.write_str("round-robin"),
            MessagePolicy::Scripted(list) => {
                let codes: Vec<&str> = list.iter().map(|m| m.code()).collect();
                write!(f, "scripted:{}", codes.join(","))
            }
        }
    }
}

impl FromStr for MessagePolicy {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || SimError::UnknownPolicy(s.to_string());
        let strategy = |code: &str| {
            RobotMessage::from_code(code.trim())
                .filter(|m| m.is_strategy())
                .ok_or_else(unknown)
        };
        match s.split_once(':') {
            None if s == "uniform" => Ok(MessagePolicy::UniformRandom),
            None if s == "round-robin" => Ok(MessagePolicy::RoundRobin),
            Some(("fixed", code)) => Ok(MessagePolicy::FixedStrategy(strategy(code)?)),
            Some(("scripted", list)) => Ok(MessagePolicy::Scripted(
                list.split(',').map(strategy).collect::<Result<_, _>>()?,
            )),
            _ => Err(unknown()),
        }
    }
}

impl MessagePolicy {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &RobotMessage| !m.is_strategy();
        match self {
            MessagePolicy::FixedStrategy(m) if bad(m) => Err(SimError::UnknownPolicy(self.to_string())),
            MessagePolicy::Scripted(list) if list.iter().any(bad) => Err(SimError::UnknownPolicy(self.to_string())),
            _ => Ok(()),
        }
    }
}

/// Stateful message selection for one session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessagePicker {
    policy: MessagePolicy,
    failures: usize,
}

impl MessagePicker {
    pub fn new(policy: MessagePolicy) -> Self {
        Self { policy, failures: 0 }
    }

    /// Message for the next failure, at 1-based `trial`, given a uniform draw.
    pub fn pick(&mut self, trial: u32, u: f64) -> Result<RobotMessage, SimError> {
        let n = self.failures;
        let message = match &self.policy {
            MessagePolicy::FixedStrategy(m) => *m,
            MessagePolicy::UniformRandom => RobotMessage::STRATEGIES[((u * 4.0) as usize).min(3)],
            MessagePolicy::RoundRobin => RobotMessage::STRATEGIES[n % 4],
            MessagePolicy::Scripted(list) => *list.get(n).ok_or(SimError::ScriptExhausted { trial })?,
        };
        self.failures += 1;
        Ok(message)
    }
}

/// The five uniforms consumed by one trial.
#[derive(Debug, Clone, Copy)]
struct TrialDraws {
    complexity: f64,
    state: f64,
    action: f64,
    outcome: f64,
    message: f64,
}

impl TrialDraws {
    fn draw<R: Rng>(rng: &mut R) -> Self {
        Self {
            complexity: rng.random(),
            state: rng.random(),
            action: rng.random(),
            outcome: rng.random(),
            message: rng.random(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSession {
    pub log: SessionLog,
    /// True trust state per trial (0 = high, 1 = low).
    pub hidden_trust: Vec<usize>,
    pub total_delivery_score: i32,
}

/// SplitMix64 step; derives independent child seeds from a root seed.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    let mut z = root ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_params(params: &ModelParams) -> Result<(), SimError> {
    if *params.spec() != trust_alphabet() {
        return Err(SimError::WrongAlphabet);
    }
    Ok(())
}

fn draw_index(probs: &[f64], u: f64) -> usize {
    crate::iohmm::draw_index(probs, u)
}

/// One synthetic session; bit-reproducible from `env.seed`.
pub fn simulate_session(
    params: &ModelParams,
    env: &EnvConfig,
    policy: &MessagePolicy,
) -> Result<SimulatedSession, SimError> {
    simulate_with_id(params, env, policy, format!("sim-{:016x}", env.seed))
}

fn simulate_with_id(
    params: &ModelParams,
    env: &EnvConfig,
    policy: &MessagePolicy,
    participant_id: String,
) -> Result<SimulatedSession, SimError> {
    check_params(params)?;
    env.validate()?;
    policy.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(env.seed);
    let mut picker = MessagePicker::new(policy.clone());
    let mut log = SessionLog::empty(participant_id, false);
    let mut hidden_trust = Vec::with_capacity(env.n_trials as usize);
    let mut previous: Option<(usize, TransitionEvent)> = None;

    for trial in 1..=env.n_trials {
        let draws = TrialDraws::draw(&mut rng);
        let complexity = env.complexity_for(trial, draws.complexity);
        let state = match previous {
            None => draw_index(params.initial(), draws.state),
            Some((s, event)) => draw_index(params.transition_row(event.index(), s), draws.state),
        };
        let action = if draw_index(params.emission_row(complexity.index(), state), draws.action) == 0 {
            HumanAction::AutoDeploy
        } else {
            HumanAction::Manual
        };
        let (outcome, message) = match action {
            HumanAction::Manual => (Outcome::NotApplicable, RobotMessage::None),
            HumanAction::AutoDeploy if draws.outcome < env.success_probability => {
                (Outcome::Success, RobotMessage::None)
            }
            HumanAction::AutoDeploy => (Outcome::Failure, picker.pick(trial, draws.message)?),
        };
        let record = TrialRecord::new(trial, complexity, action, outcome, message)?;
        previous = Some((state, record.event()?));
        log.push(record)?;
        hidden_trust.push(state);
    }

    let total_delivery_score = log.total_delivery_score();
    Ok(SimulatedSession {
        log,
        hidden_trust,
        total_delivery_score,
    })
}

/// Independent sessions with seeds derived from `env.seed`.
///
/// Participants are named `sim-000`, `sim-001`, ...
pub fn simulate_cohort(
    params: &ModelParams,
    env: &EnvConfig,
    policy: &MessagePolicy,
    n_participants: usize,
) -> Result<Vec<SimulatedSession>, SimError> {
    if n_participants == 0 {
        return Err(SimError::InvalidConfig("n_participants must be at least 1".into()));
    }
    (0..n_participants)
        .into_par_iter()
        .map(|i| {
            let session_env = EnvConfig {
                seed: derive_seed(env.seed, i as u64),
                ..env.clone()
            };
            simulate_with_id(params, &session_env, policy, format!("sim-{i:03}"))
        })
        .collect()
}

/// Monte Carlo estimate of one policy's total delivery score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEstimate {
    pub policy: MessagePolicy,
    pub mean: f64,
    pub std_error: f64,
    pub n_mc: usize,
}

/// Compares policies on common random numbers: replicate `i` uses the same
/// seed for every policy.
pub fn evaluate_policy(
    params: &ModelParams,
    env: &EnvConfig,
    policies: &[MessagePolicy],
    n_mc: usize,
) -> Result<Vec<PolicyEstimate>, SimError> {
    if n_mc == 0 {
        return Err(SimError::InvalidConfig("n_mc must be at least 1".into()));
    }
    check_params(params)?;
    env.validate()?;
    policies
        .iter()
        .map(|policy| {
            let scores: Vec<f64> = (0..n_mc)
                .into_par_iter()
                .map(|i| {
                    let run_env = EnvConfig {
                        seed: derive_seed(env.seed, i as u64),
                        ..env.clone()
                    };
                    simulate_with_id(params, &run_env, policy, String::new())
                        .map(|s| s.total_delivery_score as f64)
                })
                .collect::<Result<_, _>>()?;
            let n = scores.len() as f64;
            let mean = scores.iter().sum::<f64>() / n;
            let std_error = if scores.len() > 1 {
                let var = scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            Ok(PolicyEstimate {
                policy: policy.clone(),
                mean,
                std_error,
                n_mc,
            })
        })
        .collect()
}

/// Empirical conditional frequencies gathered from simulated sessions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConditionalTallies {
    /// `[complexity][state]` -> (auto-deploys, total).
    pub actions: [[(u64, u64); 2]; 2],
    /// `[event][state]` -> (next state high, total).
    pub transitions: [[(u64, u64); 2]; 6],
}

impl ConditionalTallies {
    pub fn add(&mut self, session: &SimulatedSession) {
        let trials = session.log.trials();
        for (t, trial) in trials.iter().enumerate() {
            let s = session.hidden_trust[t];
            let cell = &mut self.actions[trial.complexity.index()][s];
            cell.1 += 1;
            if trial.human_action == HumanAction::AutoDeploy {
                cell.0 += 1;
            }
            if t + 1 < trials.len() {
                let event = trial.event().expect("simulator output is valid");
                let cell = &mut self.transitions[event.index()][s];
                cell.1 += 1;
                if session.hidden_trust[t + 1] == HIGH_TRUST {
                    cell.0 += 1;
                }
            }
        }
    }
}
