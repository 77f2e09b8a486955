//! Trains the same two-mode toy through the embedded Ising model with the
//! simulated-annealing backend, then draws synthetic rows from the result.
//!
//! ```bash
//! cargo run --release --example annealer_training
//! ```

use qrbm::embedding::{calibrate_params, generate_embedding};
use qrbm::pegasus::PegasusGraph;
use qrbm::qrbm::{generate_synthetic, train_qrbm, QrbmTrainerConfig};
use qrbm::rbm::BinaryMatrix;

fn main() -> qrbm::Result<()> {
    let g = PegasusGraph::new(16)?;
    let cal = calibrate_params(&g, 4, 4, &[1, 2, 4], &[])?;
    let emb = generate_embedding(&cal.params, g.num_qubits())?;
    println!("embedding {:?}", cal.params);

    let rows: Vec<[u8; 4]> = (0..64).map(|i| if i % 2 == 0 { [1, 1, 0, 0] } else { [0, 0, 1, 1] }).collect();
    let data = BinaryMatrix::from_rows(&rows, 4)?;
    let cfg = QrbmTrainerConfig {
        learning_rate: 0.1,
        batch_size: 16,
        num_reads: 64,
        epochs: 150,
        sweeps: 200,
        seed: 11,
        ..Default::default()
    };
    let trained = train_qrbm(&data, &cfg, &emb, Some(&g))?;
    for r in trained.log.iter().filter(|r| r.epoch % 25 == 0) {
        println!(
            "epoch {:3}  KL {:.4}  chain breaks {:.3}  {:.1} ms",
            r.epoch, r.objective, r.chain_break_rate, r.wall_ms
        );
    }

    let synth = generate_synthetic(&trained.params, &emb, &cfg, 1000)?;
    let modes = synth
        .rows
        .rows()
        .filter(|r| *r == [1, 1, 0, 0] || *r == [0, 0, 1, 1])
        .count();
    println!("{modes}/1000 synthetic rows fall on a data mode ({} anneal jobs)", synth.jobs.len());
    Ok(())
}
