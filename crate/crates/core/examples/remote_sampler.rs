//! Serves simulated annealing over HTTP on a local port and samples the
//! same problem through the remote client, checking that both agree.
//!
//! ```bash
//! cargo run --release --example remote_sampler
//! ```

use std::sync::Arc;

use qrbm::ising::IsingProblem;
use qrbm::samplers::{serve_sampler, RemoteSampler, Sampler, SamplerConfig, SimulatedAnnealing};

fn main() -> qrbm::Result<()> {
    let mut p = IsingProblem::new();
    for q in 0..6u32 {
        p.add_bias(q, 0.1 * f64::from(q) - 0.25);
        p.add_coupling(q, (q + 1) % 6, if q % 2 == 0 { 1.0 } else { -0.5 })?;
    }
    p.offset = 1.5;

    let cfg = SamplerConfig { num_reads: 20, seed: 3, sweeps: 500, ..Default::default() };
    let server = serve_sampler("127.0.0.1:0", Arc::new(SimulatedAnnealing), cfg)?;
    println!("serving on {}", server.endpoint());

    let remote = RemoteSampler::new(server.endpoint()).sample(&p, &cfg)?;
    let local = SimulatedAnnealing.sample(&p, &cfg)?;
    let same_spins = remote.samples.iter().zip(&local.samples).all(|(a, b)| a.spins == b.spins);
    let worst = remote
        .samples
        .iter()
        .zip(&local.samples)
        .map(|(a, b)| (a.energy - b.energy).abs())
        .fold(0.0, f64::max);
    println!("{} reads, identical spins: {same_spins}, max energy difference {worst:.1e}", remote.total_reads);
    println!("lowest energy {:.4}", remote.samples.iter().map(|s| s.energy).fold(f64::INFINITY, f64::min));
    server.shutdown();
    Ok(())
}
