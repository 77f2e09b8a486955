//! Class balancing by random oversampling, SMOTE and QRBM generation.
//!
//! Every method equalises the two binary classes to the majority count.
//! The balanced dataset is the input rows in their original order followed
//! by the synthetic rows.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{dominant_label, BitCodec, TabularDataset};
use crate::embedding::RbmEmbedding;
use crate::error::{Error, Result};
use crate::pegasus::PegasusGraph;
use crate::qrbm::{generate_synthetic, train_qrbm, QrbmTrainerConfig, TrainedQrbm};
use crate::seed::{derive_seed, rng_for};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceMethod {
    None,
    RandomOversample,
    Smote,
    Qrbm,
}

impl BalanceMethod {
    pub fn name(self) -> &'static str {
        match self {
            BalanceMethod::None => "none",
            BalanceMethod::RandomOversample => "random_oversample",
            BalanceMethod::Smote => "smote",
            BalanceMethod::Qrbm => "qrbm",
        }
    }
}

impl std::fmt::Display for BalanceMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for BalanceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(BalanceMethod::None),
            "random_oversample" | "ros" => Ok(BalanceMethod::RandomOversample),
            "smote" => Ok(BalanceMethod::Smote),
            "qrbm" => Ok(BalanceMethod::Qrbm),
            other => Err(Error::Config(format!("unknown balancing method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BalanceResult {
    pub dataset: TabularDataset,
    pub synthetic_rows: usize,
    pub method: BalanceMethod,
    /// Total wall time of the call.
    pub wall_ms: f64,
    /// QRBM only: training and generation+decoding shares of `wall_ms`.
    pub train_ms: Option<f64>,
    pub generate_ms: Option<f64>,
    /// `[benign, attack]`.
    pub before: [usize; 2],
    pub after: [usize; 2],
    pub model: Option<TrainedQrbm>,
}

/// JSON summary of a [`BalanceResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceSummary {
    pub method: BalanceMethod,
    pub before: [usize; 2],
    pub after: [usize; 2],
    pub synthetic_rows: usize,
    pub wall_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub train_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub generate_ms: Option<f64>,
}

impl BalanceResult {
    pub fn summary(&self) -> BalanceSummary {
        BalanceSummary {
            method: self.method,
            before: self.before,
            after: self.after,
            synthetic_rows: self.synthetic_rows,
            wall_ms: self.wall_ms,
            train_ms: self.train_ms,
            generate_ms: self.generate_ms,
        }
    }
}

/// Minority class, its row indices and the number of rows missing.
struct Deficit {
    class: u8,
    rows: Vec<usize>,
    missing: usize,
}

fn deficit(ds: &TabularDataset) -> Result<Deficit> {
    let counts = ds.class_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::InsufficientData(format!(
            "single-class dataset ({} benign, {} attack)",
            counts[0], counts[1]
        )));
    }
    let class = if counts[1] <= counts[0] { 1 } else { 0 };
    let classes = ds.classes();
    Ok(Deficit {
        class,
        rows: (0..ds.len()).filter(|&i| classes[i] == class).collect(),
        missing: counts[1 - class as usize] - counts[class as usize],
    })
}

/// Rows the minority class lacks relative to the majority.
pub fn deficit_count(counts: [usize; 2]) -> usize {
    counts[0].abs_diff(counts[1])
}

fn finish(
    ds: &TabularDataset,
    mut out: TabularDataset,
    synthetic: TabularDataset,
    method: BalanceMethod,
    started: Instant,
) -> Result<BalanceResult> {
    let synthetic_rows = synthetic.len();
    out.extend(&synthetic)?;
    Ok(BalanceResult {
        before: ds.class_counts(),
        after: out.class_counts(),
        dataset: out,
        synthetic_rows,
        method,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
        train_ms: None,
        generate_ms: None,
        model: None,
    })
}

/// Unmodified copy, for the unbalanced baseline.
pub fn no_balance(ds: &TabularDataset) -> BalanceResult {
    BalanceResult {
        dataset: ds.clone(),
        synthetic_rows: 0,
        method: BalanceMethod::None,
        wall_ms: 0.0,
        train_ms: None,
        generate_ms: None,
        before: ds.class_counts(),
        after: ds.class_counts(),
        model: None,
    }
}

/// Duplicates minority rows drawn uniformly with replacement.
pub fn random_oversample(ds: &TabularDataset, seed: u64) -> Result<BalanceResult> {
    let started = Instant::now();
    let d = deficit(ds)?;
    let mut rng = rng_for(derive_seed(seed, "balance/random_oversample"), 0);
    let picks: Vec<usize> = (0..d.missing)
        .map(|_| d.rows[rng.gen_range(0..d.rows.len())])
        .collect();
    finish(
        ds,
        ds.clone(),
        ds.select_rows(&picks),
        BalanceMethod::RandomOversample,
        started,
    )
}

/// Indices of the `k` nearest rows (excluding `i` itself) by squared
/// Euclidean distance; ties go to the lower index.
fn nearest(points: &[Vec<f64>], i: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(j, p)| {
            (
                p.iter()
                    .zip(&points[i])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum(),
                j,
            )
        })
        .collect();
    let k = k.min(d.len());
    d.select_nth_unstable_by(k.saturating_sub(1), |a, b| {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
    });
    d.truncate(k);
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().map(|(_, j)| j).collect()
}

/// SMOTE: interpolates between a minority row and one of its `k` nearest
/// minority neighbours. Distances use features min-max scaled over `ds`.
pub fn smote(ds: &TabularDataset, k: usize, seed: u64) -> Result<BalanceResult> {
    let started = Instant::now();
    if k == 0 {
        return Err(Error::Parameter("smote needs k ≥ 1".into()));
    }
    let d = deficit(ds)?;
    if d.rows.len() <= k {
        return Err(Error::Parameter(format!(
            "minority class has {} rows, smote needs more than k={k}; try k={}",
            d.rows.len(),
            d.rows.len().saturating_sub(1).max(1)
        )));
    }
    if ds.rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Domain(
            "smote needs finite feature values; run clean first".into(),
        ));
    }
    let ranges: Vec<(f64, f64)> = (0..ds.n_features())
        .map(|j| {
            let c = ds.column(j);
            let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, if hi > lo { hi - lo } else { 1.0 })
        })
        .collect();
    let scaled: Vec<Vec<f64>> = d
        .rows
        .iter()
        .map(|&i| {
            ds.rows[i]
                .iter()
                .zip(&ranges)
                .map(|(x, (lo, w))| (x - lo) / w)
                .collect()
        })
        .collect();
    let neighbours: Vec<Vec<usize>> = (0..scaled.len())
        .into_par_iter()
        .map(|i| nearest(&scaled, i, k))
        .collect();

    let mut rng = rng_for(derive_seed(seed, "balance/smote"), 0);
    let mut rows = Vec::with_capacity(d.missing);
    let mut labels = Vec::with_capacity(d.missing);
    for _ in 0..d.missing {
        let a = rng.gen_range(0..d.rows.len());
        let b = neighbours[a][rng.gen_range(0..neighbours[a].len())];
        let lambda: f64 = rng.gen();
        let (x, y) = (&ds.rows[d.rows[a]], &ds.rows[d.rows[b]]);
        rows.push(x.iter().zip(y).map(|(p, q)| p + lambda * (q - p)).collect());
        labels.push(ds.labels[d.rows[a]].clone());
    }
    let synthetic = TabularDataset {
        rows,
        labels,
        ..ds.select_rows(&[])
    };
    finish(ds, ds.clone(), synthetic, BalanceMethod::Smote, started)
}

/// Trains a QRBM on the encoded minority rows and decodes generated
/// samples until the classes are even. The result is projected onto the
/// codec features; synthetic rows take the minority's most common label.
pub fn qrbm_balance(
    ds: &TabularDataset,
    codec: &BitCodec,
    emb: &RbmEmbedding,
    graph: Option<&PegasusGraph>,
    cfg: &QrbmTrainerConfig,
) -> Result<BalanceResult> {
    let started = Instant::now();
    if codec.total_bits != emb.n_visible() {
        return Err(Error::Dimension(format!(
            "codec width {} but embedding has {} visible units",
            codec.total_bits,
            emb.n_visible()
        )));
    }
    let projected = ds.select_features(&codec.feature_names())?;
    let d = deficit(&projected)?;
    let (bits, _clipped) = codec.encode_dataset(&projected.select_rows(&d.rows))?;
    let model = train_qrbm(&bits, cfg, emb, graph)?;
    let train_ms = started.elapsed().as_secs_f64() * 1e3;

    let gen_started = Instant::now();
    let label = dominant_label(&projected, d.class).expect("minority is nonempty");
    let synthetic = if d.missing == 0 {
        projected.select_rows(&[])
    } else {
        let generated = generate_synthetic(&model.params, emb, cfg, d.missing)?;
        codec.decode_dataset(&generated.rows, &label, &projected)?
    };
    let generate_ms = gen_started.elapsed().as_secs_f64() * 1e3;

    let mut result = finish(
        ds,
        projected.clone(),
        synthetic,
        BalanceMethod::Qrbm,
        started,
    )?;
    result.train_ms = Some(train_ms);
    result.generate_ms = Some(generate_ms);
    result.model = Some(model);
    Ok(result)
}
