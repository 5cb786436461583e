//! Follow one simulated participant trial by trial, updating the belief
//! over trust as each trial closes, and print it next to the true state.
//!
//! ```bash
//! cargo run -p trust-iohmm --example track_trust_online -- 3
//! ```

use trust_iohmm::iohmm::{filter_update, Belief};
use trust_iohmm::simulator::{simulate_session, EnvConfig, MessagePolicy};
use trust_iohmm::trust::{p_high, paper_reference_params};

fn main() -> anyhow::Result<()> {
    let seed: u64 = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(3);
    let params = paper_reference_params();
    let env = EnvConfig {
        n_trials: 25,
        seed,
        ..EnvConfig::default()
    };
    let session = simulate_session(&params, &env, &MessagePolicy::UniformRandom)?;

    let mut belief = Belief::new(params.initial().to_vec());
    println!("trial  P(high)  true  event");
    for (t, &hidden) in session.log.trials().iter().zip(&session.hidden_trust) {
        let event = t.event()?;
        let bar = "#".repeat((p_high(&belief) * 20.0).round() as usize);
        println!(
            "{:>5}  {:>7.3}  {:>4}  {:<13} {bar}",
            t.trial_index,
            p_high(&belief),
            if hidden == 0 { "H" } else { "L" },
            event.label()
        );
        belief = filter_update(&params, &belief, &t.filter_step()?)?;
    }
    println!("after the last trial: P(high) = {:.3}", p_high(&belief));
    Ok(())
}
