use proptest::prelude::*;
use qrbm::data::*;
use qrbm::seed::rng_for;
use qrbm::Error;
use rand::Rng;

fn dataset(rows: Vec<Vec<f64>>, labels: Vec<&str>) -> TabularDataset {
    let d = rows.first().map_or(0, Vec::len);
    TabularDataset::new(
        (0..d).map(|j| format!("f{j}")).collect(),
        rows,
        labels.into_iter().map(String::from).collect(),
        "BENIGN",
    )
    .unwrap()
}

#[test]
fn full_scale_split_counts() {
    let benign = 2_104_309;
    let attack = 420_538;
    let (bt, at) = (train_count(benign, 0.7), train_count(attack, 0.7));
    assert_eq!((bt, at), (1_473_016, 294_377));
    assert_eq!(bt + at, 1_767_393);
    assert_eq!((benign - bt, attack - at), (631_293, 126_161));
    assert_eq!(benign + attack - bt - at, 757_454);
}

#[test]
fn split_is_stratified_disjoint_and_seeded() {
    let n = 1000;
    let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
    let labels: Vec<&str> = (0..n)
        .map(|i| if i % 10 == 0 { "PortScan" } else { "BENIGN" })
        .collect();
    let ds = dataset(rows, labels);
    let (tr, te) = split(&ds, 0.7, 5).unwrap();
    assert_eq!(
        tr.class_counts(),
        [train_count(900, 0.7), train_count(100, 0.7)]
    );
    assert_eq!(tr.len() + te.len(), n);
    let mut all: Vec<f64> = tr.rows.iter().chain(&te.rows).map(|r| r[0]).collect();
    all.sort_by(f64::total_cmp);
    assert_eq!(all, (0..n).map(|i| i as f64).collect::<Vec<_>>());
    assert_eq!(split(&ds, 0.7, 5).unwrap(), (tr.clone(), te));
    assert_ne!(split(&ds, 0.7, 6).unwrap().0, tr);
}

#[test]
fn csv_load_handles_markers_and_drops() {
    let text = "Flow ID, Flow Duration,Rate, Label\n\
                a,1,Infinity,BENIGN\n\
                b,2,NaN,DDoS\n\
                c,3,,BENIGN\n\
                d,4,0.5, BENIGN \n";
    let schema = CsvSchema {
        drop_columns: vec!["Flow ID".into()],
        ..CsvSchema::default()
    };
    let ds = read_csv(text.as_bytes(), &schema).unwrap();
    assert_eq!(ds.features, vec!["Flow Duration", "Rate"]);
    assert!(ds.rows[0][1].is_infinite());
    assert!(ds.rows[1][1].is_nan() && ds.rows[2][1].is_nan());
    assert_eq!(ds.labels[3], "BENIGN");
    assert_eq!(ds.class_counts(), [3, 1]);
    let (clean_ds, rep) = clean(&ds);
    assert_eq!((rep.rows_dropped_nan, rep.rows_dropped_inf), (2, 1));
    assert_eq!(clean_ds.rows, vec![vec![4.0, 0.5]]);
}

#[test]
fn csv_cell_error_names_row_and_column() {
    let text = "x,y,Label\n1,2,BENIGN\n3,oops,BENIGN\n";
    match read_csv(text.as_bytes(), &CsvSchema::default()).unwrap_err() {
        Error::Cell { row, column, .. } => assert_eq!((row, column.as_str()), (2, "y")),
        other => panic!("{other}"),
    }
    assert!(matches!(
        read_csv("x,y\n1,2\n".as_bytes(), &CsvSchema::default()),
        Err(Error::Malformed(_))
    ));
}

#[test]
fn csv_write_read_round_trip() {
    let ds = desk_fixture(3);
    let mut buf = Vec::new();
    ds.write_csv(&mut buf).unwrap();
    let back = read_csv(buf.as_slice(), &CsvSchema::default()).unwrap();
    assert_eq!(back, ds);
    assert_eq!(back.content_hash(), ds.content_hash());
}

#[test]
fn integer_width_boundaries() {
    let ds = dataset(
        vec![vec![0.0, 0.0], vec![255.0, 256.0]],
        vec!["BENIGN", "DDoS"],
    );
    for (name, bits) in [("f0", 8), ("f1", 9)] {
        let cfg = CodecConfig {
            total_bits: bits,
            continuous_bits: 8,
            features: vec![name.into()],
        };
        let codec = fit_codec(&ds, &cfg).unwrap();
        assert_eq!(codec.features[0].n_bits as usize, bits);
        assert_eq!(codec.features[0].kind, Quantization::IntegerOffset);
    }
}

#[test]
fn fifteen_eight_bit_features_fill_120() {
    let mut rng = rng_for(8, 0);
    let rows: Vec<Vec<f64>> = (0..200)
        .map(|_| (0..15).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let ds = dataset(rows, vec!["BENIGN"; 200]);
    let cfg = CodecConfig {
        total_bits: 120,
        continuous_bits: 8,
        features: ds.features.clone(),
    };
    let codec = fit_codec(&ds, &cfg).unwrap();
    assert!(codec.features.iter().all(|f| f.n_bits == 8));
    assert_eq!(codec.total_bits, 120);
}

#[test]
fn continuous_round_trip_within_half_step() {
    let mut rng = rng_for(21, 0);
    let rows: Vec<Vec<f64>> = (0..10_000)
        .map(|_| vec![rng.gen_range(-3.0..7.0)])
        .collect();
    let ds = dataset(rows, vec!["BENIGN"; 10_000]);
    let codec = fit_codec(
        &ds,
        &CodecConfig {
            total_bits: 8,
            continuous_bits: 8,
            features: vec!["f0".into()],
        },
    )
    .unwrap();
    let half = codec.features[0].step() / 2.0;
    for r in &ds.rows {
        let (bits, clipped) = codec.encode_row(r).unwrap();
        assert_eq!(clipped, 0);
        let back = codec.decode_row(&bits).unwrap();
        assert!((back[0] - r[0]).abs() <= half + 1e-12);
    }
}

#[test]
fn selection_ranks_informative_feature_and_fills_budget() {
    let mut rng = rng_for(4, 0);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..2000 {
        let attack = i % 4 == 0;
        let signal = if attack { 3.0 } else { 0.0 } + rng.gen_range(-1.0..1.0);
        rows.push(vec![
            rng.gen_range(0.0..1.0),
            signal,
            rng.gen_range(0..4) as f64,
        ]);
        labels.push(if attack { "DDoS" } else { "BENIGN" });
    }
    let ds = dataset(rows, labels);
    let codec = fit_codec(
        &ds,
        &CodecConfig {
            total_bits: 12,
            continuous_bits: 4,
            features: vec![],
        },
    )
    .unwrap();
    assert_eq!(codec.features[0].name, "f1");
    assert_eq!(
        codec
            .features
            .iter()
            .map(|f| f.n_bits as usize)
            .sum::<usize>(),
        12
    );
    let json = codec.to_json().unwrap();
    assert_eq!(BitCodec::from_json(&json).unwrap(), codec);
    let (bits, clipped) = codec.encode_dataset(&ds).unwrap();
    assert_eq!((bits.nrows(), bits.ncols(), clipped), (2000, 12, 0));
}

#[test]
fn corrupted_codec_json_is_rejected() {
    let ds = dataset(vec![vec![0.0], vec![3.0]], vec!["BENIGN", "BENIGN"]);
    let codec = fit_codec(
        &ds,
        &CodecConfig {
            total_bits: 2,
            continuous_bits: 8,
            features: vec!["f0".into()],
        },
    )
    .unwrap();
    let bad = codec
        .to_json()
        .unwrap()
        .replace("\"total_bits\": 2", "\"total_bits\": 3");
    assert!(BitCodec::from_json(&bad).is_err());
}

#[test]
fn preprocess_on_fixture_drops_constant_and_copy() {
    let (out, rep) = preprocess(&desk_fixture(0), DEFAULT_CORR_THRESHOLD).unwrap();
    assert_eq!(rep.features_dropped_zerovar, vec!["protocol_flag"]);
    assert_eq!(rep.features_dropped_corr, vec!["flow_duration_copy"]);
    assert_eq!(rep.final_rows, out.len());
    let (again, rep2) = preprocess(&out, DEFAULT_CORR_THRESHOLD).unwrap();
    assert_eq!(again, out);
    assert_eq!(rep2.duplicates_removed, 0);
}

fn messy_dataset() -> impl Strategy<Value = TabularDataset> {
    (2usize..40, 1usize..5, any::<u64>()).prop_map(|(n, d, seed)| {
        let mut rng = rng_for(seed, 0);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            if i > 0 && rng.gen_bool(0.3) {
                let k = rng.gen_range(0..i);
                rows.push(rows[k].clone());
                labels.push(labels[k]);
                continue;
            }
            let mut r: Vec<f64> = (0..d).map(|_| rng.gen_range(0..3) as f64).collect();
            if rng.gen_bool(0.1) {
                r[0] = f64::NAN;
            } else if rng.gen_bool(0.1) {
                r[0] = f64::INFINITY;
            }
            if d > 1 && rng.gen_bool(0.5) {
                r[d - 1] = 2.0 * r[0];
            }
            rows.push(r);
            labels.push(if rng.gen_bool(0.2) { "DDoS" } else { "BENIGN" });
        }
        dataset(rows, labels)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn preprocess_is_idempotent(ds in messy_dataset()) {
        if let Ok((once, _)) = preprocess(&ds, 0.9) {
            if let Ok((twice, rep)) = preprocess(&once, 0.9) {
                prop_assert_eq!(&twice, &once);
                prop_assert_eq!(rep.rows_dropped_nan + rep.rows_dropped_inf + rep.duplicates_removed, 0);
                prop_assert!(rep.features_dropped_corr.is_empty() && rep.features_dropped_zerovar.is_empty());
            }
        }
    }

    #[test]
    fn integer_codec_round_trip_is_exact(vals in proptest::collection::vec(-500i64..500, 2..50)) {
        let rows: Vec<Vec<f64>> = vals.iter().map(|&v| vec![v as f64]).collect();
        let n = rows.len();
        let ds = dataset(rows, vec!["BENIGN"; n]);
        let (lo, hi) = (*vals.iter().min().unwrap() as f64, *vals.iter().max().unwrap() as f64);
        let bits = integer_bits(lo, hi) as usize;
        let codec = fit_codec(&ds, &CodecConfig { total_bits: bits, continuous_bits: 8, features: vec!["f0".into()] }).unwrap();
        for r in &ds.rows {
            let (b, _) = codec.encode_row(r).unwrap();
            prop_assert_eq!(codec.decode_row(&b).unwrap(), r.clone());
        }
    }

    #[test]
    fn decoded_values_stay_in_range(bits in proptest::collection::vec(0u8..2, 11)) {
        let ds = dataset(vec![vec![0.0, -1.0], vec![200.0, 2.5]], vec!["BENIGN", "BENIGN"]);
        let codec = fit_codec(&ds, &CodecConfig { total_bits: 11, continuous_bits: 3, features: vec!["f0".into(), "f1".into()] }).unwrap();
        let v = codec.decode_row(&bits).unwrap();
        prop_assert!((0.0..=200.0).contains(&v[0]));
        prop_assert!((-1.0..=2.5 + 1e-12).contains(&v[1]));
    }
}
