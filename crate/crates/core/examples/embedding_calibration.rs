//! Searches for valid placement parameters for a range of RBM sizes on
//! nominal P16 and prints the chain statistics of each hit.
//!
//! ```bash
//! cargo run --release --example embedding_calibration -- 4x4 12x12 60x60 120x120
//! ```

use std::time::Instant;

use qrbm::embedding::{
    calibrate_params, chains_longer_than, default_periodicity_candidates, embedding_stats,
    generate_embedding, validate_embedding,
};
use qrbm::pegasus::PegasusGraph;

fn main() -> qrbm::Result<()> {
    let g = PegasusGraph::new(16)?;
    let sizes: Vec<(usize, usize)> = std::env::args()
        .skip(1)
        .filter_map(|a| {
            let (v, h) = a.split_once('x')?;
            Some((v.parse().ok()?, h.parse().ok()?))
        })
        .collect();
    let sizes = if sizes.is_empty() {
        vec![(4, 4), (8, 8), (12, 12)]
    } else {
        sizes
    };

    for (nv, nh) in sizes {
        let started = Instant::now();
        let candidates = default_periodicity_candidates(nv, nh);
        match calibrate_params(&g, nv, nh, &candidates, &[]) {
            Ok(cal) => {
                let emb = generate_embedding(&cal.params, g.num_qubits())?;
                let report = validate_embedding(&g, &emb)?;
                let stats = embedding_stats(&emb);
                println!(
                    "{nv}x{nh}: {:?} valid={} qubits={} max_chain={} chains>6={} ({:.1?})",
                    cal.params,
                    report.valid,
                    stats.qubits_used,
                    stats.max_chain_length,
                    chains_longer_than(&emb, 6),
                    started.elapsed()
                );
            }
            Err(e) => println!("{nv}x{nh}: {e} ({:.1?})", started.elapsed()),
        }
    }
    Ok(())
}
