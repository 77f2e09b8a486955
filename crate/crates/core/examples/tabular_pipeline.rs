//! Cleans, splits and binarizes a flow table. Reads a CSV when a path is
//! given, otherwise the bundled fixture.
//!
//! ```bash
//! cargo run --release --example tabular_pipeline -- flows.csv
//! ```

use std::path::Path;

use qrbm::data::{self, CodecConfig, CsvSchema};

fn main() -> qrbm::Result<()> {
    let raw = match std::env::args().nth(1) {
        Some(p) => data::load_csv(Path::new(&p), &CsvSchema::default())?,
        None => data::desk_fixture(7),
    };
    println!("{} rows, {} features, classes {:?}", raw.len(), raw.n_features(), raw.class_counts());

    let (clean, report) = data::preprocess(&raw, data::DEFAULT_CORR_THRESHOLD)?;
    println!("{report:#?}");

    let (train, test) = data::split(&clean, data::DEFAULT_TRAIN_FRACTION, 7)?;
    println!("train {:?}  test {:?}", train.class_counts(), test.class_counts());

    let codec = data::fit_codec(&train, &CodecConfig { total_bits: 12, continuous_bits: 3, features: vec![] })?;
    for f in &codec.features {
        println!("  {:<18} {:?} {} bits, [{:.3}, {:.3}]", f.name, f.kind, f.n_bits, f.min, f.max);
    }
    let (bits, clipped) = codec.encode_dataset(&test.select_features(&codec.feature_names())?)?;
    println!("test set encoded to {}x{} bits, {clipped} values clipped", bits.nrows(), bits.ncols());
    let row = codec.decode_row(bits.row(0))?;
    println!("first test row decodes to {row:.3?}");
    Ok(())
}
