use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::iohmm::{filter_update, Belief, ModelError, ModelParams};
use crate::simulator::{EnvConfig, MessagePicker, MessagePolicy, SimError};
use crate::trust::{
    counting_reward, delivery_reward, p_high, trust_alphabet, Complexity, CountingAnswer, DomainError,
    HumanAction, Outcome, RobotMessage, SessionLog, TrialRecord,
};

/// Robots introduce themselves by name; each trial gets a fresh one.
pub const ROBOT_NAMES: [&str; 65] = [
    "Ada", "Bolt", "Cog", "Dot", "Echo", "Flux", "Gizmo", "Halo", "Iris", "Jolt", "Kilo", "Luma",
    "Mote", "Nova", "Orbit", "Pixel", "Quill", "Rivet", "Sprocket", "Tess", "Unit", "Volt", "Widget",
    "Xeno", "Yara", "Zip", "Axle", "Beacon", "Cricket", "Dynamo", "Ember", "Ferro", "Glint", "Hopper",
    "Ion", "Juno", "Kite", "Lumen", "Maxwell", "Nimbus", "Onyx", "Piston", "Quasar", "Relay", "Spark",
    "Tango", "Umber", "Vector", "Watt", "Xylo", "Yoyo", "Zephyr", "Atlas", "Bramble", "Cobalt",
    "Delta", "Elio", "Fizz", "Gear", "Helix", "Indigo", "Jasper", "Kelvin", "Lark", "Mica",
];

pub const DEFAULT_COUNTING_LIMIT_SECS: u32 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingAction,
    ManualDelivery,
    Counting,
    AwaitingTrustReport,
    Finished,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("operation {operation} not allowed in phase {phase:?}")]
    WrongPhase { operation: &'static str, phase: Phase },
    #[error("invalid session configuration: {0}")]
    InvalidConfig(String),
    #[error("trust report {0} outside 1..=10")]
    ReportOutOfRange(i64),
    #[error("trust estimates are only available in researcher mode")]
    NotResearcher,
    #[error("trust estimate unavailable: {0}")]
    EstimateUnavailable(String),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Everything needed to rebuild a session from its journal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub session_id: String,
    pub env: EnvConfig,
    pub policy: MessagePolicy,
    pub researcher_mode: bool,
    #[serde(default)]
    pub practice: bool,
    pub counting_time_limit_secs: u32,
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        self.env.validate()?;
        self.policy.validate()?;
        if self.counting_time_limit_secs == 0 {
            return Err(SessionError::InvalidConfig("counting time limit must be positive".into()));
        }
        Ok(())
    }
}

/// A participant input. Journaled verbatim; replay re-applies them in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    Action { action: HumanAction },
    Manual { completed: bool },
    Count {
        answer: Option<i64>,
        expected: i64,
        timed_out: bool,
    },
    Trust { value: i64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShownMessage {
    pub strategy: RobotMessage,
    pub text: String,
}

/// Response to any accepted command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandResult {
    pub trial: u32,
    pub phase: Phase,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<ShownMessage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delivery_score_delta: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counting: Option<CountingAnswer>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counting_score_delta: Option<i32>,
}

/// What a participant sees for the current trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialView {
    pub session_id: String,
    pub trial: u32,
    pub n_trials: u32,
    pub complexity: Complexity,
    pub robot_name: String,
    pub phase: Phase,
    pub practice: bool,
    pub delivery_score: i32,
    pub counting_score: i32,
    pub counting_time_limit_secs: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<HumanAction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Outcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<ShownMessage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustEstimate {
    pub completed_trials: usize,
    /// Predictive P(high trust) for the next trial.
    pub p_high: f64,
    pub belief: Belief,
    /// Predictive P(high trust) at the start of every trial so far, current one last.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Pending {
    complexity: Complexity,
    action: Option<HumanAction>,
    outcome: Option<Outcome>,
    message: RobotMessage,
    message_text: Option<String>,
    manual_abandoned: bool,
    counting: Option<CountingAnswer>,
}

/// One participant's live experiment.
#[derive(Debug, Clone)]
pub struct LiveSession {
    config: SessionConfig,
    params: ModelParams,
    log: SessionLog,
    phase: Phase,
    pending: Pending,
    picker: MessagePicker,
    /// Occurrences of each repair strategy so far, for variant alternation.
    shown: [usize; 4],
    robot_names: Vec<&'static str>,
    delivery_score: i32,
    counting_score: i32,
    beliefs: Result<Vec<Belief>, String>,
}

impl LiveSession {
    pub fn new(config: SessionConfig, params: ModelParams) -> Result<Self, SessionError> {
        config.validate()?;
        if *params.spec() != trust_alphabet() {
            return Err(SimError::WrongAlphabet.into());
        }
        let mut robot_names = ROBOT_NAMES.to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(config.env.seed);
        rng.set_stream(u64::MAX);
        robot_names.shuffle(&mut rng);

        let initial = Belief::new(params.initial().to_vec());
        let mut session = Self {
            log: SessionLog::empty(config.session_id.clone(), config.practice),
            picker: MessagePicker::new(config.policy.clone()),
            config,
            params,
            phase: Phase::AwaitingAction,
            pending: Pending::fresh(Complexity::Low),
            shown: [0; 4],
            robot_names,
            delivery_score: 0,
            counting_score: 0,
            beliefs: Ok(vec![initial]),
        };
        session.pending = Pending::fresh(session.draw_complexity(1));
        Ok(session)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn id(&self) -> &str {
        &self.config.session_id
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn delivery_score(&self) -> i32 {
        self.delivery_score
    }

    pub fn counting_score(&self) -> i32 {
        self.counting_score
    }

    /// 1-based index of the trial in progress (or the last one once finished).
    pub fn current_trial(&self) -> u32 {
        (self.log.len() as u32 + 1).min(self.config.env.n_trials)
    }

    /// Per-trial generator: the same trial always sees the same draws.
    fn trial_rng(&self, trial: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.env.seed);
        rng.set_stream(trial as u64);
        rng
    }

    fn draw_complexity(&self, trial: u32) -> Complexity {
        let u: f64 = self.trial_rng(trial).random();
        self.config.env.complexity_for(trial, u)
    }

    fn robot_name(&self, trial: u32) -> &'static str {
        self.robot_names[(trial as usize - 1) % self.robot_names.len()]
    }

    pub fn trial_view(&self) -> Result<TrialView, SessionError> {
        self.require("get_trial", &[
            Phase::AwaitingAction,
            Phase::ManualDelivery,
            Phase::Counting,
            Phase::AwaitingTrustReport,
        ])?;
        let trial = self.current_trial();
        Ok(TrialView {
            session_id: self.config.session_id.clone(),
            trial,
            n_trials: self.config.env.n_trials,
            complexity: self.pending.complexity,
            robot_name: self.robot_name(trial).to_string(),
            phase: self.phase,
            practice: self.config.practice,
            delivery_score: self.delivery_score,
            counting_score: self.counting_score,
            counting_time_limit_secs: self.config.counting_time_limit_secs,
            action: self.pending.action,
            outcome: self.pending.outcome,
            message: self.pending.shown_message(),
        })
    }

    pub fn estimate(&self) -> Result<TrustEstimate, SessionError> {
        if !self.config.researcher_mode {
            return Err(SessionError::NotResearcher);
        }
        let beliefs = self.beliefs.as_ref().map_err(|e| SessionError::EstimateUnavailable(e.clone()))?;
        let current = beliefs.last().expect("initial belief always present").clone();
        Ok(TrustEstimate {
            completed_trials: self.log.len(),
            p_high: p_high(&current),
            belief: current,
            trace: beliefs.iter().map(p_high).collect(),
        })
    }

    fn require(&self, operation: &'static str, allowed: &[Phase]) -> Result<(), SessionError> {
        if allowed.contains(&self.phase) {
            Ok(())
        } else {
            Err(SessionError::WrongPhase {
                operation,
                phase: self.phase,
            })
        }
    }

    /// Applies one participant input. On error the session is unchanged.
    pub fn apply(&mut self, command: &Command) -> Result<CommandResult, SessionError> {
        match *command {
            Command::Action { action } => self.submit_action(action),
            Command::Manual { completed } => self.submit_manual(completed),
            Command::Count {
                answer,
                expected,
                timed_out,
            } => self.submit_count(answer, expected, timed_out),
            Command::Trust { value } => self.submit_trust(value),
        }
    }

    fn result(&self, trial: u32) -> CommandResult {
        CommandResult {
            trial,
            phase: self.phase,
            outcome: None,
            message: None,
            delivery_score_delta: None,
            counting: None,
            counting_score_delta: None,
        }
    }

    fn submit_action(&mut self, action: HumanAction) -> Result<CommandResult, SessionError> {
        self.require("action", &[Phase::AwaitingAction])?;
        let trial = self.current_trial();
        let mut rng = self.trial_rng(trial);
        let _complexity_draw: f64 = rng.random();
        let u_outcome: f64 = rng.random();
        let u_message: f64 = rng.random();

        if action == HumanAction::Manual {
            self.pending.action = Some(action);
            self.phase = Phase::ManualDelivery;
            return Ok(self.result(trial));
        }

        let (outcome, message) = if u_outcome < self.config.env.success_probability {
            (Outcome::Success, RobotMessage::None)
        } else {
            let mut picker = self.picker.clone();
            let message = picker.pick(trial, u_message)?;
            self.picker = picker;
            (Outcome::Failure, message)
        };
        let delta = delivery_reward(action, outcome)?;
        if let Some(k) = RobotMessage::STRATEGIES.iter().position(|m| *m == message) {
            let variants = message.variants();
            self.pending.message_text = Some(variants[self.shown[k] % variants.len()].to_string());
            self.shown[k] += 1;
        }
        self.pending.action = Some(action);
        self.pending.outcome = Some(outcome);
        self.pending.message = message;
        self.delivery_score += delta;
        self.phase = Phase::Counting;
        Ok(CommandResult {
            outcome: Some(outcome),
            message: self.pending.shown_message(),
            delivery_score_delta: Some(delta),
            ..self.result(trial)
        })
    }

    fn submit_manual(&mut self, completed: bool) -> Result<CommandResult, SessionError> {
        self.require("manual", &[Phase::ManualDelivery])?;
        let delta = delivery_reward(HumanAction::Manual, Outcome::NotApplicable)?;
        self.pending.outcome = Some(Outcome::NotApplicable);
        self.pending.manual_abandoned = !completed;
        self.delivery_score += delta;
        self.phase = Phase::Counting;
        Ok(CommandResult {
            outcome: Some(Outcome::NotApplicable),
            delivery_score_delta: Some(delta),
            ..self.result(self.current_trial())
        })
    }

    fn submit_count(&mut self, answer: Option<i64>, expected: i64, timed_out: bool) -> Result<CommandResult, SessionError> {
        self.require("count", &[Phase::Counting])?;
        let result = match answer {
            _ if timed_out => CountingAnswer::NoAnswer,
            None => CountingAnswer::NoAnswer,
            Some(a) if a == expected => CountingAnswer::Correct,
            Some(_) => CountingAnswer::Incorrect,
        };
        let delta = counting_reward(result);
        self.pending.counting = Some(result);
        self.counting_score += delta;
        self.phase = Phase::AwaitingTrustReport;
        Ok(CommandResult {
            counting: Some(result),
            counting_score_delta: Some(delta),
            ..self.result(self.current_trial())
        })
    }

    fn submit_trust(&mut self, value: i64) -> Result<CommandResult, SessionError> {
        self.require("trust", &[Phase::AwaitingTrustReport])?;
        if !(1..=10).contains(&value) {
            return Err(SessionError::ReportOutOfRange(value));
        }
        let trial = self.current_trial();
        let p = &self.pending;
        let action = p.action.expect("action recorded before trust report");
        let outcome = p.outcome.expect("outcome recorded before trust report");
        let mut record = TrialRecord::new(trial, p.complexity, action, outcome, p.message)?
            .with_report(value as u8)?;
        if let Some(c) = p.counting {
            record = record.with_counting(c);
        }
        record.manual_abandoned = p.manual_abandoned;
        let step = record.filter_step()?;
        self.log.push(record)?;

        // Same arithmetic as the offline filter, one step at a time.
        if let Ok(beliefs) = &mut self.beliefs {
            let last = beliefs.last().expect("initial belief always present");
            match filter_update(&self.params, last, &step) {
                Ok(next) => beliefs.push(next),
                Err(ModelError::ImpossibleSequence { .. }) => {
                    self.beliefs = Err(format!("trial {trial} has zero probability under the model"));
                }
                Err(e) => self.beliefs = Err(e.to_string()),
            }
        }

        if trial >= self.config.env.n_trials {
            self.phase = Phase::Finished;
        } else {
            self.phase = Phase::AwaitingAction;
            self.pending = Pending::fresh(self.draw_complexity(trial + 1));
        }
        Ok(self.result(trial))
    }
}

impl Pending {
    fn fresh(complexity: Complexity) -> Self {
        Self {
            complexity,
            action: None,
            outcome: None,
            message: RobotMessage::None,
            message_text: None,
            manual_abandoned: false,
            counting: None,
        }
    }

    fn shown_message(&self) -> Option<ShownMessage> {
        self.message_text.as_ref().map(|text| ShownMessage {
            strategy: self.message,
            text: text.clone(),
        })
    }
}
