//! Monte Carlo comparison of repair-message policies under the reference
//! trust model, on common random numbers.
//!
//! ```bash
//! cargo run --release -p trust-iohmm --example compare_repair_policies -- 10000 60
//! ```

use trust_iohmm::simulator::{evaluate_policy, EnvConfig, MessagePolicy};
use trust_iohmm::trust::{paper_reference_params, RobotMessage};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_mc: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(10_000);
    let n_trials: u32 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(60);

    let env = EnvConfig {
        n_trials,
        seed: 7,
        ..EnvConfig::default()
    };
    let mut policies: Vec<MessagePolicy> = RobotMessage::STRATEGIES
        .into_iter()
        .map(MessagePolicy::FixedStrategy)
        .collect();
    policies.push(MessagePolicy::UniformRandom);
    policies.push(MessagePolicy::RoundRobin);

    let estimates = evaluate_policy(&paper_reference_params(), &env, &policies, n_mc)?;
    println!("{:<16} {:>10} {:>8}", "policy", "mean", "se");
    for e in &estimates {
        println!("{:<16} {:>10.2} {:>8.2}", e.policy.to_string(), e.mean, e.std_error);
    }
    Ok(())
}
