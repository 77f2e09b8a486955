//! Maps a small random RBM to an Ising problem and compares the exact
//! sampler's frequencies and simulated annealing's ground-state hit rate
//! against full enumeration.
//!
//! ```bash
//! cargo run --release --example ising_samplers
//! ```

use ndarray::{Array1, Array2};
use qrbm::ising::rbm_to_logical_ising;
use qrbm::rbm::RbmParams;
use qrbm::samplers::{exact_table, ExactSampler, Sampler, SamplerConfig, SimulatedAnnealing};
use qrbm::seed::rng_for;
use rand::Rng;

fn main() -> qrbm::Result<()> {
    let mut rng = rng_for(5, 0);
    let params = RbmParams::from_parts(
        Array2::from_shape_fn((4, 3), |_| rng.gen_range(-2.0..2.0)),
        Array1::from_shape_fn(4, |_| rng.gen_range(-1.0..1.0)),
        Array1::from_shape_fn(3, |_| rng.gen_range(-1.0..1.0)),
    )?;
    let problem = rbm_to_logical_ising(&params)?;
    let table = exact_table(&problem)?;
    println!(
        "{} spins, {} states, ground energy {:.4}",
        problem.num_variables(),
        table.probabilities.len(),
        table.ground_energy()
    );

    let cfg = SamplerConfig { num_reads: 50_000, seed: 1, ..Default::default() };
    let exact = ExactSampler.sample(&problem, &cfg)?;
    let mut counts = vec![0usize; table.probabilities.len()];
    for s in &exact.samples {
        counts[table.state_of(&s.spins)] += s.occurrences;
    }
    let tv: f64 = counts
        .iter()
        .zip(&table.probabilities)
        .map(|(&c, &p)| (c as f64 / cfg.num_reads as f64 - p).abs())
        .sum::<f64>()
        / 2.0;
    println!("exact sampler: TV to the table {tv:.4}");

    for sweeps in [10, 100, 1000] {
        let cfg = SamplerConfig { num_reads: 200, seed: 2, sweeps, ..Default::default() };
        let sa = SimulatedAnnealing.sample(&problem, &cfg)?;
        let hits: usize = sa
            .samples
            .iter()
            .filter(|s| s.energy <= table.ground_energy() + 1e-9)
            .map(|s| s.occurrences)
            .sum();
        println!(
            "SA {sweeps:5} sweeps: {hits}/{} reads at the ground state ({:.1} ms)",
            sa.total_reads, sa.metadata.wall_ms
        );
    }
    Ok(())
}
