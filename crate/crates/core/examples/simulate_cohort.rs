//! Write a synthetic cohort to disk as session logs plus hidden-trust
//! sidecars, then read it back and summarize it.
//!
//! ```bash
//! cargo run -p trust-iohmm --example simulate_cohort -- /tmp/cohort 8
//! ```

use std::path::PathBuf;

use trust_iohmm::analysis::cmd_simulate;
use trust_iohmm::simulator::{EnvConfig, MessagePolicy};
use trust_iohmm::trust::{paper_reference_params, read_log_paths, HumanAction};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out: PathBuf = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("trust-cohort"));
    let n: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(8);

    let env = EnvConfig {
        n_trials: 40,
        seed: 11,
        ..EnvConfig::default()
    };
    let summary = cmd_simulate(&paper_reference_params(), &env, &MessagePolicy::RoundRobin, n, &out)?;
    println!("{} sessions written to {}", summary.sessions, out.display());

    println!("{:<8} {:>6} {:>6} {:>6}", "id", "auto", "manual", "score");
    for log in read_log_paths(&[&out])? {
        let auto = log.trials().iter().filter(|t| t.human_action == HumanAction::AutoDeploy).count();
        println!(
            "{:<8} {:>6} {:>6} {:>6}",
            log.participant_id,
            auto,
            log.len() - auto,
            log.total_delivery_score()
        );
    }
    Ok(())
}
