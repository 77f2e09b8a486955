//! One PASS/FAIL line per acceptance criterion.
//!
//! The process exits 0 so that the rest of the workspace suite keeps running;
//! set `QRBM_ACCEPTANCE_STRICT=1` to exit 1 when any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use qrbm::balance::{deficit_count, BalanceMethod, BalanceSummary};
use qrbm::cli::run_args;
use qrbm::data::{fit_codec, integer_bits, CodecConfig, CsvSchema, Quantization, TabularDataset};
use qrbm::embedding::{
    calibrate_params, chains_longer_than, default_periodicity_candidates, embedding_stats,
    generate_embedding, validate_embedding, EmbeddingParams,
};
use qrbm::evalx::{read_report_csv, ClassifierKind, ReportCell};
use qrbm::ising::{rbm_to_logical_ising, IsingProblem};
use qrbm::pegasus::PegasusGraph;
use qrbm::qrbm::{train_qrbm_from, QrbmTrainerConfig};
use qrbm::rbm::{
    empirical_distribution, exact_distribution, kl_to_data, train_cd, BinaryMatrix, CdConfig,
    RbmParams,
};
use qrbm::samplers::{exact_table, ExactSampler, Sampler, SamplerConfig, SimulatedAnnealing};
use qrbm::seed::rng_for;
use rand::Rng;
use sha2::{Digest, Sha256};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.3} s", d.as_secs_f64())
}

fn embedding_validity() -> Outcome {
    let g = PegasusGraph::new(16).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [4usize, 60, 120] {
        let started = Instant::now();
        match calibrate_params(&g, n, n, &default_periodicity_candidates(n, n), &[]) {
            Ok(cal) => {
                let emb = generate_embedding(&cal.params, g.num_qubits()).unwrap();
                let r = validate_embedding(&g, &emb).unwrap();
                let ok =
                    r.valid && r.missing_couplers.is_empty() && r.overlapping_qubits.is_empty();
                pass &= ok;
                parts.push(format!(
                    "{n}x{n}: {} bad couplers, {} overlaps, n_periodicity {}",
                    r.missing_couplers.len(),
                    r.overlapping_qubits.len(),
                    cal.params.n_periodicity
                ));
            }
            Err(_) => {
                pass = false;
                parts.push(format!(
                    "{n}x{n}: no valid embedding for any of the {} periodicity candidates ({})",
                    default_periodicity_candidates(n, n).len(),
                    secs(started.elapsed())
                ));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn params_120() -> EmbeddingParams {
    EmbeddingParams {
        n_visible: 120,
        n_hidden: 120,
        periodicity_v: 40,
        periodicity_h: 40,
        n_periodicity: 20,
        startv: 0,
        starto: 2880,
    }
}

fn chain_claim() -> Outcome {
    let emb = generate_embedding(&params_120(), 5760).unwrap();
    let stats = embedding_stats(&emb);
    let longer = chains_longer_than(&emb, 6);
    outcome(
        stats.max_chain_length == 6 && longer == 0,
        format!(
            "max chain length {}, chains longer than 6: {longer}",
            stats.max_chain_length
        ),
    )
}

fn generation_time() -> Outcome {
    let p = params_120();
    let started = Instant::now();
    let emb = generate_embedding(&p, 5760).unwrap();
    let elapsed = started.elapsed();
    assert_eq!(emb.n_visible(), 120);
    outcome(
        elapsed < Duration::from_millis(100),
        format!(
            "120x120 generated in {:.3} ms (limit 100 ms)",
            elapsed.as_secs_f64() * 1e3
        ),
    )
}

fn random_params(nv: usize, nh: usize, scale: f64, seed: u64) -> RbmParams {
    let mut rng = rng_for(seed, 0);
    let w = Array2::from_shape_fn((nv, nh), |_| rng.gen_range(-scale..scale));
    let b = Array1::from_shape_fn(nv, |_| rng.gen_range(-scale..scale));
    let c = Array1::from_shape_fn(nh, |_| rng.gen_range(-scale..scale));
    RbmParams::from_parts(w, b, c).unwrap()
}

fn boltzmann_exactness() -> Outcome {
    let started = Instant::now();
    let (mut worst_sum, mut worst_tv, mut cases) = (0f64, 0f64, 0);
    for nv in 1..8 {
        for nh in 1..=8 - nv {
            for seed in 0..5 {
                let p = random_params(nv, nh, 2.0, 100 * nv as u64 + 10 * nh as u64 + seed);
                let rbm = exact_distribution(&p).unwrap();
                worst_sum = worst_sum.max((rbm.iter().sum::<f64>() - 1.0).abs());
                let ising = exact_table(&rbm_to_logical_ising(&p).unwrap()).unwrap();
                let tv = rbm
                    .iter()
                    .zip(&ising.probabilities)
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
                    / 2.0;
                worst_tv = worst_tv.max(tv);
                cases += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    outcome(
        worst_sum <= 1e-12 && worst_tv < 1e-9 && elapsed < Duration::from_secs(10),
        format!(
            "{cases} RBMs: max |sum-1| {worst_sum:.1e}, max TV {worst_tv:.1e}, {}",
            secs(elapsed)
        ),
    )
}

fn random_problem(n: u32, seed: u64) -> IsingProblem {
    let mut rng = rng_for(seed, 0);
    let mut p = IsingProblem::new();
    for q in 0..n {
        p.add_bias(q, rng.gen_range(-1.0..1.0));
        for r in q + 1..n {
            if rng.gen_bool(0.5) {
                p.add_coupling(q, r, rng.gen_range(-1.0..1.0)).unwrap();
            }
        }
    }
    p
}

/// ±J couplings on a random half of all pairs, zero field.
fn spin_glass(n: u32, seed: u64) -> IsingProblem {
    let mut rng = rng_for(seed, 0);
    let mut p = IsingProblem::new();
    for q in 0..n {
        p.add_bias(q, 0.0);
        for r in q + 1..n {
            if rng.gen_bool(0.5) {
                let j = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                p.add_coupling(q, r, j).unwrap();
            }
        }
    }
    p
}

fn sampler_agreement() -> Outcome {
    let started = Instant::now();
    let p = random_problem(5, 11);
    let t = exact_table(&p).unwrap();
    let cfg = SamplerConfig {
        num_reads: 100_000,
        seed: 17,
        ..Default::default()
    };
    let ss = ExactSampler.sample(&p, &cfg).unwrap();
    let mut counts = vec![0usize; t.probabilities.len()];
    for s in &ss.samples {
        counts[t.state_of(&s.spins)] += s.occurrences;
    }
    let tv = counts
        .iter()
        .zip(&t.probabilities)
        .map(|(&c, &q)| (c as f64 / 1e5 - q).abs())
        .sum::<f64>()
        / 2.0;

    let cfg = SamplerConfig {
        num_reads: 100,
        seed: 2,
        sweeps: 1000,
        ..Default::default()
    };
    let (mut hits, mut reads) = (0, 0);
    for instance in 0..10 {
        let p = spin_glass(12, 1000 + instance);
        let ground = exact_table(&p).unwrap().ground_energy();
        let ss = SimulatedAnnealing.sample(&p, &cfg).unwrap();
        hits += ss
            .samples
            .iter()
            .filter(|s| s.energy <= ground + 1e-9)
            .map(|s| s.occurrences)
            .sum::<usize>();
        reads += ss.total_reads;
    }
    let rate = hits as f64 / reads as f64;
    let elapsed = started.elapsed();
    outcome(
        tv < 0.02 && rate >= 0.9 && elapsed < Duration::from_secs(60),
        format!(
            "exact TV {tv:.4} at 1e5 reads; SA ground-state rate {rate:.3} over {reads} reads; {}",
            secs(elapsed)
        ),
    )
}

fn two_mode_data(copies: usize) -> BinaryMatrix {
    let mut rows = Vec::new();
    for _ in 0..copies {
        rows.push(vec![1u8, 1, 0, 0]);
        rows.push(vec![0u8, 0, 1, 1]);
    }
    BinaryMatrix::from_rows(&rows, 4).unwrap()
}

fn learning() -> Outcome {
    let started = Instant::now();
    let g = PegasusGraph::new(16).unwrap();
    let cal = calibrate_params(&g, 4, 4, &[1, 2, 4], &[]).unwrap();
    let emb = generate_embedding(&cal.params, g.num_qubits()).unwrap();
    let data = two_mode_data(32);
    let dist = empirical_distribution(&data).unwrap();
    let seed = 11;
    let init = RbmParams::random(4, 4, &mut rng_for(seed, 0));
    let before = kl_to_data(&init, &dist).unwrap();
    let cd = CdConfig {
        k: 1,
        learning_rate: 0.1,
        batch_size: 16,
        epochs: 500,
        seed,
    };
    let (_, cd_log) = train_cd(init.clone(), &data, &cd, &mut rng_for(seed, 1)).unwrap();
    let cd_kl = cd_log.last().unwrap().objective;
    let cfg = QrbmTrainerConfig {
        learning_rate: cd.learning_rate,
        batch_size: cd.batch_size,
        num_reads: 64,
        epochs: cd.epochs,
        chain_strength: 2.0,
        sweeps: 200,
        seed,
        ..Default::default()
    };
    let trained = train_qrbm_from(init, &data, &cfg, &emb, &SimulatedAnnealing).unwrap();
    let sa_kl = trained.log.last().unwrap().objective;
    let elapsed = started.elapsed();
    outcome(
        cd_kl <= 0.5 * before && sa_kl <= 1.5 * cd_kl && elapsed < Duration::from_secs(300),
        format!(
            "KL {before:.4} -> CD-1 {cd_kl:.4} ({:.0}% reduction), SA-trained {sa_kl:.4} ({:.2}x CD-1), 500 epochs, {}",
            100.0 * (1.0 - cd_kl / before),
            sa_kl / cd_kl,
            secs(elapsed)
        ),
    )
}

fn codec() -> Outcome {
    let mut rng = rng_for(77, 0);
    let n = 10_000;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            vec![
                rng.gen_range(0..1000) as f64,
                rng.gen_range(-50..50) as f64,
                rng.gen_range(-3.0..7.0),
            ]
        })
        .collect();
    let labels = (0..n)
        .map(|i| if i % 20 == 7 { "DDoS" } else { "BENIGN" }.to_string())
        .collect();
    let ds = TabularDataset::new(
        vec!["a".into(), "b".into(), "c".into()],
        rows,
        labels,
        "BENIGN",
    )
    .unwrap();
    let cfg = CodecConfig {
        total_bits: 10 + 7 + 8,
        continuous_bits: 8,
        features: ds.features.clone(),
    };
    let codec = fit_codec(&ds, &cfg).unwrap();
    let kinds: Vec<Quantization> = codec.features.iter().map(|f| f.kind).collect();
    let half = codec.features[2].step() / 2.0;
    let (mut int_exact, mut worst) = (true, 0f64);
    for r in &ds.rows {
        let (bits, _) = codec.encode_row(r).unwrap();
        let back = codec.decode_row(&bits).unwrap();
        int_exact &= back[0] == r[0] && back[1] == r[1];
        worst = worst.max((back[2] - r[2]).abs());
    }
    let widths = (integer_bits(0.0, 255.0), integer_bits(0.0, 256.0));
    let pass = kinds
        == [
            Quantization::IntegerOffset,
            Quantization::IntegerOffset,
            Quantization::Scaled,
        ]
        && int_exact
        && worst <= half + 1e-12
        && widths == (8, 9);
    outcome(
        pass,
        format!(
            "integers lossless: {int_exact}; continuous max error {worst:.3e} vs half step {half:.3e} over {n} values; range 255 -> {} bits, 256 -> {} bits",
            widths.0, widths.1
        ),
    )
}

fn sha(path: &Path) -> String {
    hex_digest(&fs::read(path).unwrap())
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn run_pipeline(dir: &Path) -> Duration {
    let out = dir.join("out");
    let started = Instant::now();
    run_args([
        "qrbm",
        "--quiet",
        "--seed",
        "2024",
        "--out",
        out.to_str().unwrap(),
        "pipeline",
    ])
    .unwrap();
    started.elapsed()
}

fn balancing(out: &Path) -> Outcome {
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    let summaries: Vec<BalanceSummary> = serde_json::from_value(report["balance"].clone()).unwrap();
    let train = qrbm::data::load_csv(&out.join("train.csv"), &CsvSchema::default()).unwrap();
    let before = train.class_counts();
    let mut pass = before[1] * 19 == before[0]
        || (before[1] as f64 / (before[0] + before[1]) as f64 - 0.05).abs() < 0.005;
    let mut parts = vec![format!("train split {before:?}")];
    for method in [
        BalanceMethod::RandomOversample,
        BalanceMethod::Smote,
        BalanceMethod::Qrbm,
    ] {
        let s = summaries.iter().find(|s| s.method == method).unwrap();
        let synthetic = qrbm::data::load_csv(
            &out.join(format!("synthetic_{method}.csv")),
            &CsvSchema::default(),
        )
        .unwrap();
        let equal = s.after[0] == s.after[1]
            && s.before == before
            && synthetic.len() == deficit_count(before);
        pass &= equal;
        parts.push(format!("{method} {:?}", s.after));
    }
    let full_scale = deficit_count([2_104_309, 420_538]);
    pass &= full_scale == 1_683_771;
    parts.push(format!("full-scale deficit {full_scale}"));
    outcome(pass, parts.join("; "))
}

fn improvement(out: &Path) -> Outcome {
    let cells = read_report_csv(fs::File::open(out.join("report.csv")).unwrap()).unwrap();
    let get = |m: BalanceMethod, c: ClassifierKind| -> &ReportCell {
        cells
            .iter()
            .find(|x| x.method == m && x.classifier == c)
            .unwrap()
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for c in [ClassifierKind::Knn, ClassifierKind::DecisionTree] {
        let base = get(BalanceMethod::None, c);
        for m in [
            BalanceMethod::RandomOversample,
            BalanceMethod::Smote,
            BalanceMethod::Qrbm,
        ] {
            let x = get(m, c);
            let ok = x.minority_recall > base.minority_recall && x.f1 >= base.f1;
            pass &= ok;
            parts.push(format!(
                "{c}/{m}: recall {:.3}->{:.3}, F1 {:.3}->{:.3}{}",
                base.minority_recall,
                x.minority_recall,
                base.f1,
                x.f1,
                if ok { "" } else { " (x)" }
            ));
        }
    }
    outcome(pass, parts.join("; "))
}

fn determinism(a: &Path, b: &Path, times: [Duration; 2]) -> Outcome {
    let mut names = vec!["report.csv".to_string()];
    names.extend(
        ["random_oversample", "smote", "qrbm"]
            .iter()
            .map(|m| format!("synthetic_{m}.csv")),
    );
    let mut same = BTreeMap::new();
    for n in &names {
        same.insert(n.clone(), sha(&a.join(n)) == sha(&b.join(n)));
    }
    let identical = same.values().all(|&x| x);
    let limit = Duration::from_secs(600);
    outcome(
        identical && times.iter().all(|t| *t < limit),
        format!(
            "{} of {} artifacts hash-identical; runs took {} and {}",
            same.values().filter(|&&x| x).count(),
            names.len(),
            secs(times[0]),
            secs(times[1])
        ),
    )
}

fn main() {
    let titles = [
        "embedding validity",
        "120x120 chain length",
        "120x120 generation time",
        "Boltzmann exactness",
        "sampler oracle agreement",
        "learning",
        "codec",
        "balancing exactness",
        "pipeline improvement",
        "end-to-end determinism",
    ];
    let mut results: Vec<Outcome> = vec![
        embedding_validity(),
        chain_claim(),
        generation_time(),
        boltzmann_exactness(),
        sampler_agreement(),
        learning(),
        codec(),
    ];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let times = [run_pipeline(a.path()), run_pipeline(b.path())];
    let (oa, ob) = (a.path().join("out"), b.path().join("out"));
    results.push(balancing(&oa));
    results.push(improvement(&oa));
    results.push(determinism(&oa, &ob, times));

    let mut failed = 0;
    for (i, (title, r)) in titles.iter().zip(&results).enumerate() {
        println!(
            "criterion {:>2} {:<26} {}  {}",
            i + 1,
            title,
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
        failed += usize::from(!r.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 && std::env::var_os("QRBM_ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
