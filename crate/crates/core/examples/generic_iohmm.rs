//! The IOHMM layer on its own: fit a three-state model to sequences sampled
//! from a random one, then smooth the first sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trust_iohmm::iohmm::{baum_welch, forward_scaled, sample_sequence, smooth, AlphabetSpec, FitConfig, ModelParams, SequenceData};

fn main() -> anyhow::Result<()> {
    let spec = AlphabetSpec::new(3, 2, 2, 3)?;
    let truth = ModelParams::random(spec, &mut ChaCha8Rng::seed_from_u64(1))?;

    let n_steps = 30;
    let sequences: Vec<SequenceData> = (0..200u64)
        .map(|i| {
            let emission_inputs: Vec<usize> = (0..n_steps).map(|t| (t + i as usize) % 2).collect();
            let transition_inputs: Vec<usize> = (0..n_steps - 1).map(|t| (t / 3) % 2).collect();
            let path = sample_sequence(&truth, &emission_inputs, &transition_inputs, i)?;
            SequenceData::new(path.outputs, emission_inputs, transition_inputs)
        })
        .collect::<Result<_, _>>()?;

    let truth_ll: f64 = sequences
        .iter()
        .map(|s| forward_scaled(&truth, s).map(|f| f.log_likelihood))
        .sum::<Result<_, _>>()?;
    let config = FitConfig {
        restarts: 8,
        ..FitConfig::default()
    };
    let fit = baum_welch(&spec, &sequences, &config, None)?;
    println!(
        "log-likelihood: generating {:.2}, fitted {:.2} after {} iterations",
        truth_ll,
        fit.log_likelihood(),
        fit.log_likelihood_trace.len() - 1
    );

    let posterior = smooth(&fit.params, &sequences[0])?;
    println!("smoothed state marginals, first sequence:");
    for (t, row) in posterior.gamma.iter().enumerate().take(10) {
        let cells: Vec<String> = row.iter().map(|p| format!("{p:.2}")).collect();
        println!("  t={t:<2} {}", cells.join(" "));
    }
    Ok(())
}
