//! Balances the fixture's training split with random oversampling, SMOTE
//! and the annealer-trained RBM, and reports counts and timings.
//!
//! ```bash
//! cargo run --release --example class_balancing
//! ```

use qrbm::balance::{qrbm_balance, random_oversample, smote, BalanceResult};
use qrbm::data::{self, CodecConfig};
use qrbm::embedding::{calibrate_params, generate_embedding};
use qrbm::pegasus::PegasusGraph;
use qrbm::qrbm::QrbmTrainerConfig;

fn show(r: &BalanceResult) {
    println!(
        "{:<18} {:?} -> {:?}  +{} rows  {:.1} ms",
        r.method.name(),
        r.before,
        r.after,
        r.synthetic_rows,
        r.wall_ms
    );
}

fn main() -> qrbm::Result<()> {
    let (clean, _) = data::preprocess(&data::desk_fixture(7), data::DEFAULT_CORR_THRESHOLD)?;
    let (train, _) = data::split(&clean, data::DEFAULT_TRAIN_FRACTION, 7)?;

    show(&random_oversample(&train, 1)?);
    show(&smote(&train, 5, 1)?);

    let codec = data::fit_codec(&train, &CodecConfig { total_bits: 12, continuous_bits: 3, features: vec![] })?;
    let g = PegasusGraph::new(16)?;
    let cal = calibrate_params(&g, 12, 12, &[1], &[])?;
    let emb = generate_embedding(&cal.params, g.num_qubits())?;
    let cfg = QrbmTrainerConfig { epochs: 20, sweeps: 100, batch_size: 32, seed: 1, ..Default::default() };
    let r = qrbm_balance(&train, &codec, &emb, Some(&g), &cfg)?;
    show(&r);
    println!(
        "  train {:.0} ms, generate {:.0} ms",
        r.train_ms.unwrap_or(0.0),
        r.generate_ms.unwrap_or(0.0)
    );
    Ok(())
}
