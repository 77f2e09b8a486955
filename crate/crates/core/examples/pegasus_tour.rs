//! Builds the Pegasus graph, prints its size and degree profile, and
//! optionally writes the edge list for comparison with external dumps.
//!
//! ```bash
//! cargo run --example pegasus_tour -- 16 /tmp/p16.edges
//! ```

use std::fs::File;
use std::io::BufWriter;

use qrbm::pegasus::PegasusGraph;

fn main() -> qrbm::Result<()> {
    let mut args = std::env::args().skip(1);
    let m: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(16);
    let g = PegasusGraph::new(m)?;

    let mut histogram = [0usize; 16];
    for q in 0..g.num_qubits() {
        histogram[g.degree(q)?] += 1;
    }
    println!(
        "P{m}: {} qubits, {} couplers",
        g.num_qubits(),
        g.num_edges()
    );
    for (degree, count) in histogram.iter().enumerate().filter(|(_, c)| **c > 0) {
        println!("  degree {degree:2}: {count}");
    }
    let q = g.num_qubits() / 2;
    println!(
        "qubit {q} = {:?}, neighbours {:?}",
        g.from_linear(q)?,
        g.neighbors(q)?
    );

    if let Some(path) = args.next() {
        g.write_edge_list(BufWriter::new(File::create(&path)?))?;
        println!("edge list written to {path}");
    }
    Ok(())
}
