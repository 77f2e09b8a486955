use proptest::prelude::*;
use qrbm::balance::*;
use qrbm::data::*;
use qrbm::embedding::{calibrate_params, generate_embedding, RbmEmbedding};
use qrbm::pegasus::PegasusGraph;
use qrbm::qrbm::QrbmTrainerConfig;
use qrbm::seed::{derive_seed, rng_for};
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

/// `n` rows, every twentieth an attack, two uniform features.
fn imbalanced(n: usize, seed: u64) -> TabularDataset {
    let mut rng = rng_for(seed, 0);
    let rows = (0..n)
        .map(|_| vec![rng.gen_range(0.0..10.0), rng.gen_range(-1.0..1.0)])
        .collect();
    let labels = (0..n)
        .map(|i| if i % 20 == 3 { "DDoS" } else { "BENIGN" })
        .collect();
    dataset(rows, labels)
}

fn assert_prefix_untouched(orig: &TabularDataset, r: &BalanceResult) {
    assert_eq!(&r.dataset.rows[..orig.len()], orig.rows.as_slice());
    assert_eq!(&r.dataset.labels[..orig.len()], orig.labels.as_slice());
}

#[test]
fn full_scale_deficit() {
    assert_eq!(deficit_count([2_104_309, 420_538]), 1_683_771);
    assert_eq!(2 * 2_104_309, 4_208_618);
}

#[test]
fn oversample_counts_and_copies() {
    let ds = imbalanced(1000, 1);
    assert_eq!(ds.class_counts(), [950, 50]);
    let r = random_oversample(&ds, 9).unwrap();
    assert_eq!(r.synthetic_rows, 900);
    assert_eq!(r.after, [950, 950]);
    assert_prefix_untouched(&ds, &r);
    let minority: Vec<&Vec<f64>> = ds
        .rows
        .iter()
        .zip(&ds.labels)
        .filter(|(_, l)| *l == "DDoS")
        .map(|(r, _)| r)
        .collect();
    for (row, label) in r.dataset.rows[1000..].iter().zip(&r.dataset.labels[1000..]) {
        assert_eq!(label, "DDoS");
        assert!(minority.contains(&row));
    }
    let again = random_oversample(&ds, 9).unwrap();
    assert_eq!(again.dataset, r.dataset);
}

#[test]
fn balanced_input_adds_nothing() {
    let ds = dataset(vec![vec![1.0], vec![2.0]], vec!["BENIGN", "DDoS"]);
    assert_eq!(random_oversample(&ds, 0).unwrap().synthetic_rows, 0);
    assert_eq!(
        smote(&ds.select_rows(&[0, 1, 0, 1]), 1, 0)
            .unwrap()
            .synthetic_rows,
        0
    );
}

#[test]
fn single_class_is_rejected() {
    let ds = dataset(vec![vec![1.0], vec![2.0]], vec!["BENIGN", "BENIGN"]);
    assert!(matches!(
        random_oversample(&ds, 0),
        Err(Error::InsufficientData(_))
    ));
    assert!(matches!(smote(&ds, 1, 0), Err(Error::InsufficientData(_))));
}

#[test]
fn smote_one_dimensional_interpolation() {
    let ds = dataset(
        vec![
            vec![0.0],
            vec![10.0],
            vec![50.0],
            vec![60.0],
            vec![70.0],
            vec![80.0],
        ],
        vec!["DDoS", "DDoS", "BENIGN", "BENIGN", "BENIGN", "BENIGN"],
    );
    let r = smote(&ds, 1, 3).unwrap();
    assert_eq!(r.synthetic_rows, 2);
    for row in &r.dataset.rows[6..] {
        assert!(row[0] > 0.0 && row[0] < 10.0, "{row:?}");
    }
}

#[test]
fn smote_rejects_small_minority() {
    let ds = imbalanced(100, 2);
    match smote(&ds, 5, 0).unwrap_err() {
        Error::Parameter(msg) => assert!(msg.contains("k=4"), "{msg}"),
        other => panic!("{other}"),
    }
}

/// Straightforward SMOTE over the same random draws.
fn smote_oracle(ds: &TabularDataset, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let minority: Vec<usize> = (0..ds.len())
        .filter(|&i| ds.labels[i] != "BENIGN")
        .collect();
    let d = ds.n_features();
    let lo: Vec<f64> = (0..d)
        .map(|j| ds.rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min))
        .collect();
    let hi: Vec<f64> = (0..d)
        .map(|j| {
            ds.rows
                .iter()
                .map(|r| r[j])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let dist = |a: usize, b: usize| -> f64 {
        (0..d)
            .map(|j| {
                let w = if hi[j] > lo[j] { hi[j] - lo[j] } else { 1.0 };
                ((ds.rows[a][j] - ds.rows[b][j]) / w).powi(2)
            })
            .sum()
    };
    let mut rng = rng_for(derive_seed(seed, "balance/smote"), 0);
    let missing = ds.len() - 2 * minority.len();
    let mut out = Vec::new();
    for _ in 0..missing {
        let a = rng.gen_range(0..minority.len());
        let mut others: Vec<usize> = (0..minority.len()).filter(|&b| b != a).collect();
        others.sort_by(|&x, &y| {
            dist(minority[a], minority[x])
                .total_cmp(&dist(minority[a], minority[y]))
                .then(x.cmp(&y))
        });
        let b = others[rng.gen_range(0..k)];
        let lambda: f64 = rng.gen();
        let (x, y) = (&ds.rows[minority[a]], &ds.rows[minority[b]]);
        out.push((0..d).map(|j| x[j] + lambda * (y[j] - x[j])).collect());
    }
    out
}

#[test]
fn smote_matches_oracle_and_golden_rows() {
    let ds = imbalanced(400, 7);
    let r = smote(&ds, 5, 42).unwrap();
    let synthetic = &r.dataset.rows[400..];
    let oracle = smote_oracle(&ds, 5, 42);
    assert_eq!(synthetic.len(), 360);
    for (a, b) in synthetic.iter().zip(&oracle) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
    const GOLDEN: [[f64; 2]; 3] = [
        [6.974053609607421, -0.8725054225554512],
        [5.0008740272627445, 0.28929911894517374],
        [3.06511656916116, 0.2621740842931975],
    ];
    for (row, g) in synthetic.iter().zip(GOLDEN) {
        assert!(
            (row[0] - g[0]).abs() < 1e-12 && (row[1] - g[1]).abs() < 1e-12,
            "{row:?}"
        );
    }
    assert_prefix_untouched(&ds, &r);
    assert_eq!(r.after, [380, 380]);
    assert_eq!(smote(&ds, 5, 42).unwrap().dataset, r.dataset);
}

#[test]
fn smote_rows_lie_on_minority_segments() {
    let ds = imbalanced(10_400, 5);
    let r = smote(&ds, 5, 1).unwrap();
    let minority: Vec<&Vec<f64>> = ds
        .rows
        .iter()
        .zip(&ds.labels)
        .filter(|(_, l)| *l == "DDoS")
        .map(|(r, _)| r)
        .collect();
    let (lo0, hi0) = minority
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
            (a.min(r[0]), b.max(r[0]))
        });
    let (lo1, hi1) = minority
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
            (a.min(r[1]), b.max(r[1]))
        });
    assert!(r.synthetic_rows >= 9000);
    for row in &r.dataset.rows[ds.len()..] {
        assert!(row[0] >= lo0 && row[0] <= hi0 && row[1] >= lo1 && row[1] <= hi1);
    }
    // each of the first 200 rows sits on a segment between two minority rows
    for row in r.dataset.rows[ds.len()..].iter().take(200) {
        let on_segment = minority.iter().any(|a| {
            minority.iter().any(|b| {
                let l = if b[0] != a[0] {
                    (row[0] - a[0]) / (b[0] - a[0])
                } else {
                    0.0
                };
                (0.0..=1.0).contains(&l)
                    && (0..2).all(|j| (a[j] + l * (b[j] - a[j]) - row[j]).abs() < 1e-9)
            })
        });
        assert!(on_segment, "{row:?}");
    }
}

fn embedding_4x4() -> RbmEmbedding {
    let g = PegasusGraph::new(16).unwrap();
    let cal = calibrate_params(&g, 4, 4, &[1], &[]).unwrap();
    generate_embedding(&cal.params, g.num_qubits()).unwrap()
}

fn small_qrbm_config() -> QrbmTrainerConfig {
    QrbmTrainerConfig {
        epochs: 5,
        sweeps: 100,
        num_reads: 50,
        batch_size: 16,
        seed: 3,
        ..QrbmTrainerConfig::default()
    }
}

#[test]
fn qrbm_balance_equalises_and_clips() {
    let ds = imbalanced(600, 11);
    let codec = fit_codec(
        &ds,
        &CodecConfig {
            total_bits: 4,
            continuous_bits: 2,
            features: vec!["f0".into(), "f1".into()],
        },
    )
    .unwrap();
    let emb = embedding_4x4();
    let g = PegasusGraph::new(16).unwrap();
    let r = qrbm_balance(&ds, &codec, &emb, Some(&g), &small_qrbm_config()).unwrap();
    assert_eq!(r.synthetic_rows, 540);
    assert_eq!(r.after, [570, 570]);
    assert_prefix_untouched(&ds, &r);
    for row in &r.dataset.rows[600..] {
        for (f, x) in codec.features.iter().zip(row) {
            assert!(*x >= f.min && *x <= f.max + 1e-12);
        }
    }
    assert!(r.dataset.labels[600..].iter().all(|l| l == "DDoS"));
    assert_eq!(r.model.as_ref().unwrap().log.len(), 5);
    assert!(r.train_ms.is_some() && r.generate_ms.is_some());
    let again = qrbm_balance(&ds, &codec, &emb, Some(&g), &small_qrbm_config()).unwrap();
    assert_eq!(again.dataset, r.dataset);
    let summary: BalanceSummary =
        serde_json::from_str(&serde_json::to_string(&r.summary()).unwrap()).unwrap();
    assert_eq!(summary, r.summary());
}

#[test]
fn qrbm_balance_with_zero_deficit_still_trains() {
    let ds = dataset(
        (0..40)
            .map(|i| vec![(i % 5) as f64, (i % 3) as f64])
            .collect(),
        (0..40)
            .map(|i| if i % 2 == 0 { "BENIGN" } else { "DDoS" })
            .collect(),
    );
    let codec = fit_codec(
        &ds,
        &CodecConfig {
            total_bits: 4,
            continuous_bits: 2,
            features: vec!["f1".into(), "f0".into()],
        },
    );
    // f1 needs 2 bits, f0 needs 3: width 5 does not match
    assert!(matches!(codec, Err(Error::Allocation(_))));
    let codec = fit_codec(
        &ds,
        &CodecConfig {
            total_bits: 4,
            continuous_bits: 2,
            features: vec![],
        },
    )
    .unwrap();
    let r = qrbm_balance(&ds, &codec, &embedding_4x4(), None, &small_qrbm_config()).unwrap();
    assert_eq!(r.synthetic_rows, 0);
    assert!(r.model.is_some());
}

#[test]
fn qrbm_balance_rejects_width_mismatch() {
    let ds = imbalanced(100, 1);
    let codec = fit_codec(
        &ds,
        &CodecConfig {
            total_bits: 6,
            continuous_bits: 3,
            features: vec!["f0".into(), "f1".into()],
        },
    )
    .unwrap();
    assert!(matches!(
        qrbm_balance(&ds, &codec, &embedding_4x4(), None, &small_qrbm_config()),
        Err(Error::Dimension(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn classical_methods_balance_exactly(n_major in 10usize..80, n_minor in 6usize..30, seed in any::<u64>()) {
        let mut rng = rng_for(seed, 1);
        let rows: Vec<Vec<f64>> = (0..n_major + n_minor).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
        let labels: Vec<&str> = (0..n_major + n_minor).map(|i| if i < n_major { "BENIGN" } else { "Bot" }).collect();
        let ds = dataset(rows, labels);
        for r in [random_oversample(&ds, seed).unwrap(), smote(&ds, 5, seed).unwrap()] {
            prop_assert_eq!(r.after[0], r.after[1]);
            prop_assert_eq!(r.synthetic_rows, n_major.abs_diff(n_minor));
            prop_assert_eq!(&r.dataset.rows[..ds.len()], ds.rows.as_slice());
        }
    }
}
