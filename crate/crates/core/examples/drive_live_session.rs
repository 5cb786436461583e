//! Run a researcher-mode session through the service state without HTTP.
//!
//! A scripted participant lets the robot deliver on two trials out of three,
//! answers every counting question, and reports trust on a 1..10 scale read
//! off the live estimate. The journal and log land
//! in a temporary data directory.

use trust_iohmm::service::{AppState, Command, CreateSession, Phase, ServiceConfig};
use trust_iohmm::trust::HumanAction;

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let (state, _) = AppState::open(ServiceConfig::new(dir.path()))?;
    let created = state.create_session(CreateSession {
        n_trials: Some(12),
        seed: Some(9),
        researcher_mode: true,
        ..CreateSession::default()
    })?;
    let id = created.session_id;
    println!("session {id}, {} trials", created.n_trials);

    loop {
        let view = state.trial_view(&id)?;
        let p = state.estimate(&id)?.p_high;
        let action = if view.trial % 3 == 0 { HumanAction::Manual } else { HumanAction::AutoDeploy };
        let result = state.apply(&id, &Command::Action { action })?;
        if result.phase == Phase::ManualDelivery {
            state.apply(&id, &Command::Manual { completed: true })?;
        }
        state.apply(
            &id,
            &Command::Count {
                answer: Some(4),
                expected: 4,
                timed_out: false,
            },
        )?;
        let value = (1.0 + p * 9.0).round() as i64;
        let done = state.apply(&id, &Command::Trust { value })?;
        println!(
            "trial {:>2} {:<9} {:<5} {:<7} P(high) {:.3}  {}",
            view.trial,
            view.robot_name,
            format!("{:?}", view.complexity),
            result.outcome.map(|o| format!("{o:?}")).unwrap_or_else(|| "manual".into()),
            p,
            result.message.map(|m| m.text).unwrap_or_default()
        );
        if done.phase == Phase::Finished {
            break;
        }
    }

    let estimate = state.estimate(&id)?;
    println!("final P(high) {:.3}", estimate.p_high);
    print!("{}", state.export_log(&id)?);
    Ok(())
}
