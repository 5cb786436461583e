//! Pair noisy self-reports with filtered trust and fit the logistic curve
//! that maps one to the other.
//!
//! Reports are generated by inverting the reference curve and adding
//! occasional one-point slips. A fit on per-trial pairs recovers the curve.
//! The grouped pipeline averages three trials at a time; filtered trust
//! sits mostly near 0 or 1, so those averages fall on chords below the
//! curve and the grouped fit comes out flatter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trust_iohmm::analysis::{cmd_ground, session_trust_trace, PairMode};
use trust_iohmm::grounding::{fit_grounding, GroundingCurve, REFERENCE_CURVE};
use trust_iohmm::simulator::{simulate_cohort, EnvConfig, MessagePolicy};
use trust_iohmm::trust::{paper_reference_params, SessionLog};

fn main() -> anyhow::Result<()> {
    let params = paper_reference_params();
    let env = EnvConfig {
        n_trials: 45,
        seed: 21,
        ..EnvConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut sessions = Vec::new();
    let mut per_trial = Vec::new();
    for s in simulate_cohort(&params, &env, &MessagePolicy::UniformRandom, 60)? {
        let trace = session_trust_trace(&params, &s.log)?;
        let mut trials = Vec::new();
        for (t, p) in s.log.trials().iter().zip(trace) {
            let ideal = REFERENCE_CURVE.invert(p).unwrap_or(if p > 0.5 { 10.0 } else { 1.0 });
            let slip = if rng.random_bool(0.2) { rng.random_range(-1.0..=1.0f64).signum() } else { 0.0 };
            let noisy = (ideal.round() + slip).clamp(1.0, 10.0) as u8;
            per_trial.push((noisy as f64, p));
            trials.push(t.clone().with_report(noisy)?);
        }
        sessions.push(SessionLog::new(s.log.participant_id, false, trials)?);
    }

    let direct = fit_grounding(&per_trial)?;
    show("per-trial", &direct.curve, per_trial.len());

    let report = cmd_ground(&sessions, &params, PairMode::Median)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    show("grouped", &report.fit.curve, report.pairs.len());
    show("reference", &REFERENCE_CURVE, 0);
    print!("{}", report.curve_csv());
    Ok(())
}

fn show(label: &str, c: &GroundingCurve, n: usize) {
    println!(
        "{label:<10} asymptote {:.3}  slope {:.3}  midpoint {:.3}  pairs {n}",
        c.asymptote, c.slope, c.midpoint
    );
}
