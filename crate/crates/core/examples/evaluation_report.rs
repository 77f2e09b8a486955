//! Runs the classifier grid on the fixture for the classical balancing
//! methods and renders the per-method tables and an SVG chart.
//!
//! ```bash
//! cargo run --release --example evaluation_report -- /tmp/f1.svg
//! ```

use qrbm::balance::BalanceMethod;
use qrbm::data;
use qrbm::evalx::{render_svg, render_text, run_experiment, ClassifierKind, ExperimentConfig};

fn main() -> qrbm::Result<()> {
    let (clean, _) = data::preprocess(&data::desk_fixture(7), data::DEFAULT_CORR_THRESHOLD)?;
    let (train, test) = data::split(&clean, data::DEFAULT_TRAIN_FRACTION, 7)?;
    let cfg = ExperimentConfig {
        methods: vec![BalanceMethod::None, BalanceMethod::RandomOversample, BalanceMethod::Smote],
        classifiers: ClassifierKind::ALL.to_vec(),
        smote_k: 5,
        qrbm: None,
        seed: 7,
    };
    let report = run_experiment(&train, &test, &cfg)?;
    print!("{}", render_text(&report.cells, &report.averaging));
    for c in &report.cells {
        println!("{:<18} {:<20} minority recall {:.3}", c.method.name(), c.classifier.name(), c.minority_recall);
    }
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, render_svg(&report.cells, "f1")?)?;
        println!("chart written to {path}");
    }
    Ok(())
}
