//! The trust-modulated behavior model for robot-assisted delivery.
//!
//! Hidden trust is binary, high or low. A trial's delivery complexity drives
//! the human's choice between autonomous and manual delivery; the trial's
//! event (success, failure followed by one of four repair messages, or manual
//! delivery) drives trust into the next trial.
//!
//! Index conventions, fixed across the crate:
//!
//! | alphabet          | 0             | 1       | 2..5                         |
//! |-------------------|---------------|---------|------------------------------|
//! | state             | high trust    | low     |                              |
//! | output            | auto-deploy   | manual  |                              |
//! | emission input    | low complexity| high    |                              |
//! | transition input  | auto success  | short   | long, apology, denial, manual|

mod log;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::iohmm::{
    AlphabetSpec, FilterStep, ModelError, ModelParams, OrderingRule, SequenceData,
};

pub use log::{
    parse_log_str, read_log_file, read_log_paths, trial_line, write_log_string, CountingAnswer, LogError,
    SessionLog, TrialRecord,
};

pub const HIGH_TRUST: usize = 0;
pub const LOW_TRUST: usize = 1;
pub const N_TRUST_STATES: usize = 2;

/// Alphabet sizes of the trust model.
pub fn trust_alphabet() -> AlphabetSpec {
    AlphabetSpec {
        n_states: N_TRUST_STATES,
        n_transition_inputs: TransitionEvent::ALL.len(),
        n_emission_inputs: 2,
        n_outputs: 2,
    }
}

/// High trust is the state more likely to auto-deploy a low-complexity delivery.
pub const TRUST_ORDERING: OrderingRule = OrderingRule {
    emission_input: Complexity::Low as usize,
    output: HumanAction::AutoDeploy as usize,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("invalid trial combination: action {action:?}, outcome {outcome:?}, message {message:?}")]
    InvalidCombination {
        action: HumanAction,
        outcome: Outcome,
        message: RobotMessage,
    },
    #[error("trial {trial}: {source}")]
    Trial {
        trial: u32,
        #[source]
        source: Box<DomainError>,
    },
    #[error("reported trust {0} outside 1..=10")]
    ReportOutOfRange(u8),
    #[error("session log is empty")]
    EmptySession,
    #[error("trial numbers must run 1, 2, 3, ...; found {found} at position {position}")]
    TrialOrder { position: usize, found: u32 },
    #[error("stored delivery score {stored} does not match {expected}")]
    DeliveryScore { stored: i32, expected: i32 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Complexity {
    #[serde(rename = "L")]
    Low = 0,
    #[serde(rename = "H")]
    High = 1,
}

impl Complexity {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HumanAction {
    #[serde(rename = "auto")]
    AutoDeploy = 0,
    #[serde(rename = "manual")]
    Manual = 1,
}

impl HumanAction {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "success")]
    Success,
    #[serde(rename = "failure")]
    Failure,
    /// Manual deliveries have no autonomous outcome.
    #[serde(rename = "na")]
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RobotMessage {
    #[serde(rename = "short")]
    ShortExplanation,
    #[serde(rename = "long")]
    LongExplanation,
    #[serde(rename = "apology")]
    ApologyPromise,
    #[serde(rename = "denial")]
    Denial,
    /// No message: the delivery succeeded or was manual.
    #[serde(rename = "none")]
    None,
}

impl RobotMessage {
    /// The four repair strategies, in transition-input order.
    pub const STRATEGIES: [RobotMessage; 4] = [
        RobotMessage::ShortExplanation,
        RobotMessage::LongExplanation,
        RobotMessage::ApologyPromise,
        RobotMessage::Denial,
    ];

    pub fn is_strategy(self) -> bool {
        self != RobotMessage::None
    }

    /// Short name used in log lines and on the command line.
    pub fn code(self) -> &'static str {
        match self {
            RobotMessage::ShortExplanation => "short",
            RobotMessage::LongExplanation => "long",
            RobotMessage::ApologyPromise => "apology",
            RobotMessage::Denial => "denial",
            RobotMessage::None => "none",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        [Self::STRATEGIES.as_slice(), &[RobotMessage::None]]
            .concat()
            .into_iter()
            .find(|m| m.code() == code)
    }

    /// The two display texts shown to participants for a strategy.
    pub fn variants(self) -> &'static [&'static str] {
        match self {
            RobotMessage::ShortExplanation => &[
                "I mixed up the room numbers, causing the wrong delivery.",
                "I had a power problem and had to recharge sooner than planned.",
            ],
            RobotMessage::LongExplanation => &[
                "The mistake happened because there was a smudge on my cameras, which confused my \
                 system. A staff member has cleaned the lens, so this won't happen again.",
                "The delivery issue happened because of a new power-saving mode that didn't work as \
                 planned. It misjudged the power needed, causing me to shut down early. We're fixing \
                 it so I can complete all deliveries before recharging.",
            ],
            RobotMessage::ApologyPromise => &[
                "I'm sorry for the mistake. I'll make sure it doesn't happen again.",
                "Sorry, I didn't finish the delivery. I'll make sure it doesn't happen again.",
            ],
            RobotMessage::Denial => &[
                "I didn't make a mistake. The problem was with the room info given to me.",
                "I didn't make a mistake. No one was there to get the delivery.",
            ],
            RobotMessage::None => &[],
        }
    }
}

/// What happened in a trial, as far as trust dynamics are concerned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransitionEvent {
    AutoSuccess = 0,
    AutoFailShortExpl = 1,
    AutoFailLongExpl = 2,
    AutoFailApology = 3,
    AutoFailDenial = 4,
    Manual = 5,
}

impl TransitionEvent {
    pub const ALL: [TransitionEvent; 6] = [
        TransitionEvent::AutoSuccess,
        TransitionEvent::AutoFailShortExpl,
        TransitionEvent::AutoFailLongExpl,
        TransitionEvent::AutoFailApology,
        TransitionEvent::AutoFailDenial,
        TransitionEvent::Manual,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// The (action, outcome, message) triple that defines this event.
    pub fn decode(self) -> (HumanAction, Outcome, RobotMessage) {
        use TransitionEvent::*;
        match self {
            AutoSuccess => (HumanAction::AutoDeploy, Outcome::Success, RobotMessage::None),
            AutoFailShortExpl => (HumanAction::AutoDeploy, Outcome::Failure, RobotMessage::ShortExplanation),
            AutoFailLongExpl => (HumanAction::AutoDeploy, Outcome::Failure, RobotMessage::LongExplanation),
            AutoFailApology => (HumanAction::AutoDeploy, Outcome::Failure, RobotMessage::ApologyPromise),
            AutoFailDenial => (HumanAction::AutoDeploy, Outcome::Failure, RobotMessage::Denial),
            Manual => (HumanAction::Manual, Outcome::NotApplicable, RobotMessage::None),
        }
    }

    pub fn label(self) -> &'static str {
        use TransitionEvent::*;
        match self {
            AutoSuccess => "auto-success",
            AutoFailShortExpl => "fail-short",
            AutoFailLongExpl => "fail-long",
            AutoFailApology => "fail-apology",
            AutoFailDenial => "fail-denial",
            Manual => "manual",
        }
    }
}

/// Classifies a trial into its transition event.
pub fn encode_event(
    action: HumanAction,
    outcome: Outcome,
    message: RobotMessage,
) -> Result<TransitionEvent, DomainError> {
    use RobotMessage as M;
    let event = match (action, outcome, message) {
        (HumanAction::AutoDeploy, Outcome::Success, M::None) => TransitionEvent::AutoSuccess,
        (HumanAction::AutoDeploy, Outcome::Failure, M::ShortExplanation) => TransitionEvent::AutoFailShortExpl,
        (HumanAction::AutoDeploy, Outcome::Failure, M::LongExplanation) => TransitionEvent::AutoFailLongExpl,
        (HumanAction::AutoDeploy, Outcome::Failure, M::ApologyPromise) => TransitionEvent::AutoFailApology,
        (HumanAction::AutoDeploy, Outcome::Failure, M::Denial) => TransitionEvent::AutoFailDenial,
        (HumanAction::Manual, Outcome::NotApplicable, M::None) => TransitionEvent::Manual,
        _ => {
            return Err(DomainError::InvalidCombination {
                action,
                outcome,
                message,
            })
        }
    };
    Ok(event)
}

/// Delivery score for a trial.
pub fn delivery_reward(action: HumanAction, outcome: Outcome) -> Result<i32, DomainError> {
    match (action, outcome) {
        (HumanAction::AutoDeploy, Outcome::Success) => Ok(50),
        (HumanAction::AutoDeploy, Outcome::Failure) => Ok(-100),
        (HumanAction::Manual, Outcome::NotApplicable) => Ok(30),
        _ => Err(DomainError::InvalidCombination {
            action,
            outcome,
            message: RobotMessage::None,
        }),
    }
}

/// Counting-task score.
pub fn counting_reward(answer: CountingAnswer) -> i32 {
    match answer {
        CountingAnswer::Correct => 20,
        CountingAnswer::Incorrect => -20,
        CountingAnswer::NoAnswer => -100,
    }
}

/// P(stay high) under manual delivery.
///
/// The published transition diagram shows 0.86 on the high-trust self loop,
/// while the accompanying discussion reads it as the probability of dropping
/// to low trust. The diagram value is used here; set this to 0.14 for the
/// other reading.
pub const MANUAL_STAY_HIGH: f64 = 0.86;

/// Published P(T^L) at the first trial.
pub const INITIAL_LOW_TRUST: f64 = 0.94;

/// (P(stay high), P(low -> high)) per transition event, in event order.
pub const REFERENCE_TRANSITIONS: [(f64, f64); 6] = [
    (1.00, 0.21),
    (0.83, 0.00),
    (0.74, 0.10),
    (0.67, 0.04),
    (0.88, 0.00),
    (MANUAL_STAY_HIGH, 0.00),
];

/// P(auto-deploy) as (high trust, low trust) per complexity, in complexity order.
pub const REFERENCE_AUTO_DEPLOY: [(f64, f64); 2] = [(1.00, 0.51), (0.91, 0.46)];

/// The published trust model: the estimated initial, emission and
/// transition probabilities, in the crate's index conventions.
pub fn paper_reference_params() -> ModelParams {
    let initial = vec![1.0 - INITIAL_LOW_TRUST, INITIAL_LOW_TRUST];
    let transition = REFERENCE_TRANSITIONS
        .iter()
        .map(|&(stay_high, repair)| vec![vec![stay_high, 1.0 - stay_high], vec![repair, 1.0 - repair]])
        .collect();
    let emission = REFERENCE_AUTO_DEPLOY
        .iter()
        .map(|&(high, low)| vec![vec![high, 1.0 - high], vec![low, 1.0 - low]])
        .collect();
    ModelParams::new(trust_alphabet(), initial, transition, emission)
        .expect("reference parameters are valid")
}

/// Probability of high trust in a belief over the trust model's states.
pub fn p_high(belief: &crate::iohmm::Belief) -> f64 {
    belief.get(HIGH_TRUST)
}

/// Converts a session into an IOHMM sequence.
///
/// Outputs are actions, emission inputs are complexities and transition
/// inputs are the events of trials `1..T-1`.
pub fn session_to_sequence(log: &SessionLog) -> Result<SequenceData, DomainError> {
    log.validate()?;
    let outputs = log.trials().iter().map(|t| t.human_action.index()).collect();
    let emission_inputs = log.trials().iter().map(|t| t.complexity.index()).collect();
    let n = log.trials().len();
    let transition_inputs = log.trials()[..n - 1]
        .iter()
        .map(|t| t.event().map(TransitionEvent::index))
        .collect::<Result<_, _>>()?;
    Ok(SequenceData::new(outputs, emission_inputs, transition_inputs)?)
}

/// Filter steps for every trial of a session, each carrying its own event.
pub fn session_filter_steps(log: &SessionLog) -> Result<Vec<FilterStep>, DomainError> {
    log.validate()?;
    log.trials().iter().map(TrialRecord::filter_step).collect()
}
