//! Trains a 4x4 RBM with CD-1 on a two-mode toy and prints the exact
//! KL divergence to the data as training progresses.
//!
//! ```bash
//! cargo run --release --example contrastive_divergence
//! ```

use qrbm::rbm::{empirical_distribution, kl_to_data, train_cd, visible_marginal, BinaryMatrix, CdConfig, RbmParams};
use qrbm::seed::rng_for;

fn main() -> qrbm::Result<()> {
    let rows: Vec<[u8; 4]> = (0..64).map(|i| if i % 2 == 0 { [1, 1, 0, 0] } else { [0, 0, 1, 1] }).collect();
    let data = BinaryMatrix::from_rows(&rows, 4)?;
    let dist = empirical_distribution(&data)?;
    let init = RbmParams::random(4, 4, &mut rng_for(11, 0));
    println!("initial KL {:.4}", kl_to_data(&init, &dist)?);

    let cfg = CdConfig { k: 1, learning_rate: 0.1, batch_size: 16, epochs: 500, seed: 11 };
    let (params, log) = train_cd(init, &data, &cfg, &mut rng_for(11, 1))?;
    for r in log.iter().filter(|r| r.epoch % 100 == 0 || r.epoch == 1) {
        println!("epoch {:3}  KL {:.4}", r.epoch, r.objective);
    }

    let model = visible_marginal(&params)?;
    let mut ranked: Vec<(usize, f64)> = model.into_iter().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (state, p) in ranked.iter().take(4) {
        println!("v={:04b} (bit 0 rightmost)  p={p:.3}", state);
    }
    Ok(())
}
