//! Simulate a large cohort from the reference trust model, fit it with
//! Baum-Welch and compare the recovered tables with the generating ones.
//!
//! ```bash
//! cargo run --release -p trust-iohmm --example recover_reference_model -- 500 60 2024
//! ```

use std::time::Instant;

use trust_iohmm::iohmm::{baum_welch, canonicalize_states, FitConfig};
use trust_iohmm::simulator::{simulate_cohort, EnvConfig, MessagePolicy};
use trust_iohmm::trust::{paper_reference_params, session_to_sequence, trust_alphabet, TransitionEvent, TRUST_ORDERING};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_participants: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(500);
    let n_trials: u32 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(60);
    let seed: u64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(2024);

    let reference = paper_reference_params();
    let env = EnvConfig {
        n_trials,
        seed,
        ..EnvConfig::default()
    };
    let cohort = simulate_cohort(&reference, &env, &MessagePolicy::RoundRobin, n_participants)?;
    let sequences = cohort
        .iter()
        .map(|s| session_to_sequence(&s.log))
        .collect::<Result<Vec<_>, _>>()?;

    let started = Instant::now();
    let report = baum_welch(&trust_alphabet(), &sequences, &FitConfig::default(), None)?;
    let fitted = canonicalize_states(&report.params, TRUST_ORDERING)?.params;
    println!(
        "fit {} sessions x {} trials in {:.1?}: log-likelihood {:.3}, {} iterations, converged {}",
        n_participants,
        n_trials,
        started.elapsed(),
        report.log_likelihood(),
        report.log_likelihood_trace.len() - 1,
        report.converged
    );

    println!("initial P(high): fitted {:.3}  reference {:.3}", fitted.initial()[0], reference.initial()[0]);
    for c in 0..2 {
        println!(
            "P(auto | high, low) at complexity {c}: fitted ({:.3}, {:.3})  reference ({:.3}, {:.3})",
            fitted.emission(c, 0, 0),
            fitted.emission(c, 1, 0),
            reference.emission(c, 0, 0),
            reference.emission(c, 1, 0)
        );
    }
    for event in TransitionEvent::ALL {
        let u = event.index();
        println!(
            "{:>13}: stay-high {:.3} ({:.2})  repair {:.3} ({:.2})",
            event.label(),
            fitted.transition(u, 0, 0),
            reference.transition(u, 0, 0),
            fitted.transition(u, 1, 0),
            reference.transition(u, 1, 0)
        );
    }
    println!("max |fitted - reference| = {:.4}", fitted.max_abs_deviation(&reference)?);
    Ok(())
}
