use proptest::prelude::*;
use qrbm::balance::BalanceMethod;
use qrbm::data::TabularDataset;
use qrbm::evalx::*;
use qrbm::seed::rng_for;
use qrbm::Error;
use rand::Rng;

/// Per-class scores counted directly from the label vectors.
fn naive_macro(t: &[usize], p: &[usize], n_classes: usize) -> (f64, f64, f64) {
    let (mut ps, mut rs, mut fs) = (0.0, 0.0, 0.0);
    for c in 0..n_classes {
        let tp = t
            .iter()
            .zip(p)
            .filter(|(a, b)| **a == c && **b == c)
            .count() as f64;
        let fp = t
            .iter()
            .zip(p)
            .filter(|(a, b)| **a != c && **b == c)
            .count() as f64;
        let fneg = t
            .iter()
            .zip(p)
            .filter(|(a, b)| **a == c && **b != c)
            .count() as f64;
        let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let rec = if tp + fneg > 0.0 {
            tp / (tp + fneg)
        } else {
            0.0
        };
        let f = if prec + rec > 0.0 {
            2.0 * prec * rec / (prec + rec)
        } else {
            0.0
        };
        ps += prec;
        rs += rec;
        fs += f;
    }
    let k = n_classes as f64;
    (ps / k, rs / k, fs / k)
}

fn from_confusion(m: [[usize; 2]; 2]) -> (Vec<usize>, Vec<usize>) {
    let mut t = Vec::new();
    let mut p = Vec::new();
    for (a, row) in m.iter().enumerate() {
        for (b, &n) in row.iter().enumerate() {
            t.extend(std::iter::repeat(a).take(n));
            p.extend(std::iter::repeat(b).take(n));
        }
    }
    (t, p)
}

#[test]
fn hand_computed_confusion() {
    let (t, p) = from_confusion([[8, 2], [3, 7]]);
    let m = compute_metrics(&t, &p, 2).unwrap();
    assert!((m.precision - (8.0 / 11.0 + 7.0 / 9.0) / 2.0).abs() < 1e-15);
    assert!((m.precision - 0.7525).abs() < 5e-5);
    assert!((m.recall - 0.75).abs() < 1e-15);
    assert!(!m.zero_division);
}

#[test]
fn perfect_and_all_wrong() {
    let t = vec![0, 1, 1, 0, 1];
    let m = compute_metrics(&t, &t, 2).unwrap();
    assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    let wrong: Vec<usize> = t.iter().map(|c| 1 - c).collect();
    let m = compute_metrics(&t, &wrong, 2).unwrap();
    assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    let m = compute_metrics(&[0, 0], &[0, 0], 2).unwrap();
    assert!(m.zero_division);
    assert!(matches!(
        compute_metrics(&[0], &[0, 1], 2),
        Err(Error::Dimension(_))
    ));
}

fn blobs(n: usize, gap: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rng = rng_for(seed, 0);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let c = (i % 2) as u8;
        let off = if c == 1 { gap } else { 0.0 };
        x.push(vec![
            off + rng.gen_range(0.0..1.0),
            rng.gen_range(0.0..1.0) - off,
        ]);
        y.push(c);
    }
    (x, y)
}

#[test]
fn knn_one_memorises() {
    let (x, y) = blobs(200, 0.3, 1);
    let mut knn = Knn::new(1);
    knn.fit(&x, &y).unwrap();
    assert_eq!(knn.predict_all(&x).unwrap(), y);
}

#[test]
fn tree_fits_separable_fixture() {
    let (x, y) = blobs(400, 1.5, 2);
    let mut tree = DecisionTree::new(12);
    tree.fit(&x, &y).unwrap();
    assert_eq!(tree.predict_all(&x).unwrap(), y);
    assert_eq!(tree.depth(), 1);
}

#[test]
fn separable_fixture_every_classifier() {
    let (x, y) = blobs(400, 1.5, 3);
    for kind in ClassifierKind::ALL {
        let mut c = kind.build(7);
        c.fit(&x, &y).unwrap();
        let acc = c
            .predict_all(&x)
            .unwrap()
            .iter()
            .zip(&y)
            .filter(|(a, b)| a == b)
            .count();
        assert!(acc >= 396, "{kind}: {acc}");
    }
}

#[test]
fn constant_labels_predict_that_label() {
    let (x, _) = blobs(60, 1.0, 4);
    for label in [0u8, 1] {
        let y = vec![label; x.len()];
        for kind in ClassifierKind::ALL {
            let mut c = kind.build(1);
            c.fit(&x, &y).unwrap();
            assert!(
                c.predict_all(&x).unwrap().iter().all(|&p| p == label),
                "{kind}"
            );
            assert!(c.predict(&[100.0, -100.0]).unwrap() == label, "{kind}");
        }
    }
}

#[test]
fn classifier_errors() {
    for kind in ClassifierKind::ALL {
        let mut c = kind.build(0);
        assert!(matches!(c.fit(&[], &[]), Err(Error::InsufficientData(_))));
        assert!(c.predict(&[1.0]).is_err());
        c.fit(&[vec![0.0, 1.0], vec![1.0, 0.0]], &[0, 1]).unwrap();
        assert!(matches!(c.predict(&[1.0]), Err(Error::Dimension(_))));
    }
}

#[test]
fn forest_is_seeded() {
    let (x, y) = blobs(300, 0.2, 5);
    let (test, _) = blobs(100, 0.2, 6);
    let fit = |seed| {
        let mut f = RandomForest::new(32, 12, seed);
        f.fit(&x, &y).unwrap();
        f.predict_all(&test).unwrap()
    };
    assert_eq!(fit(3), fit(3));
}

fn toy_split(seed: u64) -> (TabularDataset, TabularDataset) {
    let mut rng = rng_for(seed, 0);
    let make = |n: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let attack = i % 10 == 0;
            let mu = if attack { 1.0 } else { 0.0 };
            rows.push(vec![
                mu + rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ]);
            labels.push(if attack {
                "DDoS".to_string()
            } else {
                "BENIGN".to_string()
            });
        }
        TabularDataset::new(vec!["a".into(), "b".into()], rows, labels, "BENIGN").unwrap()
    };
    (make(300, &mut rng), make(100, &mut rng))
}

#[test]
fn grid_size_and_order() {
    let (train, test) = toy_split(1);
    let cfg = ExperimentConfig {
        methods: vec![BalanceMethod::None],
        classifiers: vec![ClassifierKind::Knn],
        smote_k: 5,
        qrbm: None,
        seed: 0,
    };
    assert_eq!(run_experiment(&train, &test, &cfg).unwrap().cells.len(), 1);
    let cfg = ExperimentConfig {
        methods: vec![
            BalanceMethod::None,
            BalanceMethod::RandomOversample,
            BalanceMethod::Smote,
        ],
        classifiers: ClassifierKind::ALL.to_vec(),
        ..cfg
    };
    let hash = test.content_hash();
    let r = run_experiment(&train, &test, &cfg).unwrap();
    assert_eq!(test.content_hash(), hash);
    assert_eq!(r.test_hash, hash);
    assert_eq!(r.cells.len(), 15);
    assert_eq!(r.averaging, "macro");
    for (i, c) in r.cells.iter().enumerate() {
        assert_eq!(c.method, cfg.methods[i / 5]);
        assert_eq!(c.classifier, ClassifierKind::ALL[i % 5]);
    }
    let again = run_experiment(&train, &test, &cfg).unwrap();
    let strip = |r: &ExperimentReport| {
        r.cells
            .iter()
            .map(|c| (c.precision, c.recall, c.f1))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&again), strip(&r));
}

#[test]
fn qrbm_method_requires_setup() {
    let (train, test) = toy_split(2);
    let cfg = ExperimentConfig {
        methods: vec![BalanceMethod::Qrbm],
        classifiers: vec![ClassifierKind::Knn],
        smote_k: 5,
        qrbm: None,
        seed: 0,
    };
    assert!(matches!(
        run_experiment(&train, &test, &cfg),
        Err(Error::Config(_))
    ));
}

#[test]
fn report_csv_round_trip_and_rendering() {
    let (train, test) = toy_split(3);
    let cfg = ExperimentConfig {
        methods: vec![BalanceMethod::None, BalanceMethod::Smote],
        classifiers: vec![ClassifierKind::Knn, ClassifierKind::DecisionTree],
        smote_k: 3,
        qrbm: None,
        seed: 9,
    };
    let r = run_experiment(&train, &test, &cfg).unwrap();
    let mut buf = Vec::new();
    write_report_csv(&r, &mut buf).unwrap();
    let mut cells = read_report_csv(buf.as_slice()).unwrap();
    assert_eq!(cells.len(), 4);
    let mut timings = Vec::new();
    write_timings_csv(&r, &mut timings).unwrap();
    read_timings_csv(timings.as_slice(), &mut cells).unwrap();
    for (a, b) in cells.iter().zip(&r.cells) {
        assert_eq!(
            (a.method, a.classifier, a.precision, a.recall, a.f1),
            (b.method, b.classifier, b.precision, b.recall, b.f1)
        );
        assert!((a.fit_ms - b.fit_ms).abs() < 1e-3);
    }
    let text = render_text(&cells, "macro");
    assert!(text.contains("Evaluation metrics after SMOTE (macro average)"));
    assert!(text.contains("KNN") && text.contains("Decision Tree"));
    let svg = render_svg(&cells, "f1").unwrap();
    assert!(svg.starts_with("<svg") && svg.matches("<rect x=").count() >= 4);
    assert!(render_svg(&cells, "accuracy").is_err());
    assert!(read_report_csv("a,b\n1,2\n".as_bytes()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn metrics_match_naive_count(pairs in proptest::collection::vec((0usize..3, 0usize..3), 1..200)) {
        let t: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let p: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let m = compute_metrics(&t, &p, 3).unwrap();
        let (np, nr, nf) = naive_macro(&t, &p, 3);
        prop_assert!((m.precision - np).abs() < 1e-12);
        prop_assert!((m.recall - nr).abs() < 1e-12);
        prop_assert!((m.f1 - nf).abs() < 1e-12);
        for c in &m.per_class {
            prop_assert!((0.0..=1.0).contains(&c.f1));
            if c.precision + c.recall > 0.0 {
                prop_assert!((c.f1 - 2.0 * c.precision * c.recall / (c.precision + c.recall)).abs() < 1e-12);
            }
        }
    }
}
