//! Classifier harness: macro metrics, five baseline classifiers and the
//! balancing × classifier experiment grid with CSV, text and SVG output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balance::{
    no_balance, qrbm_balance, random_oversample, smote, BalanceMethod, BalanceResult,
    BalanceSummary,
};
use crate::data::{BitCodec, TabularDataset};
use crate::embedding::RbmEmbedding;
use crate::error::{Error, Result};
use crate::pegasus::PegasusGraph;
use crate::qrbm::QrbmTrainerConfig;
use crate::seed::{derive_seed, rng_for};

pub const AVERAGING: &str = "macro";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Macro-averaged scores with their per-class parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Some ratio had a zero denominator and was scored 0.
    pub zero_division: bool,
}

/// `confusion[t][p]` counts rows of true class `t` predicted as `p`.
pub fn confusion_matrix(
    y_true: &[usize],
    y_pred: &[usize],
    n_classes: usize,
) -> Result<Vec<Vec<usize>>> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Dimension(format!(
            "{} true labels, {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut m = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::Domain(format!("label outside 0..{n_classes}")));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

pub fn metrics_from_confusion(m: &[Vec<usize>]) -> Metrics {
    let n = m.len();
    let mut zero_division = false;
    let mut ratio = |num: usize, den: usize| {
        if den == 0 {
            zero_division = true;
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let mut per_class = Vec::with_capacity(n);
    for c in 0..n {
        let tp = m[c][c];
        let predicted: usize = (0..n).map(|t| m[t][c]).sum();
        let support: usize = m[c].iter().sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
            support,
        });
    }
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n.max(1) as f64;
    Metrics {
        precision: mean(|c| c.precision),
        recall: mean(|c| c.recall),
        f1: mean(|c| c.f1),
        zero_division,
        per_class,
    }
}

pub fn compute_metrics(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<Metrics> {
    Ok(metrics_from_confusion(&confusion_matrix(
        y_true, y_pred, n_classes,
    )?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    LogisticRegression,
    BernoulliNb,
    Knn,
    DecisionTree,
    RandomForest,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 5] = [
        ClassifierKind::LogisticRegression,
        ClassifierKind::BernoulliNb,
        ClassifierKind::Knn,
        ClassifierKind::DecisionTree,
        ClassifierKind::RandomForest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::LogisticRegression => "logistic_regression",
            ClassifierKind::BernoulliNb => "bernoulli_nb",
            ClassifierKind::Knn => "knn",
            ClassifierKind::DecisionTree => "decision_tree",
            ClassifierKind::RandomForest => "random_forest",
        }
    }

    /// Untrained classifier with the fixed hyperparameters.
    pub fn build(self, seed: u64) -> Box<dyn Classifier> {
        match self {
            ClassifierKind::LogisticRegression => Box::new(LogisticRegression::default()),
            ClassifierKind::BernoulliNb => Box::new(BernoulliNb::default()),
            ClassifierKind::Knn => Box::new(Knn::new(5)),
            ClassifierKind::DecisionTree => Box::new(DecisionTree::new(12)),
            ClassifierKind::RandomForest => Box::new(RandomForest::new(32, 12, seed)),
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown classifier {s:?}")))
    }
}

/// Binary classifier over dense rows; labels are 0 or 1.
pub trait Classifier: Send + Sync {
    fn fit(&mut self, x: &[Vec<f64>], y: &[u8]) -> Result<()>;
    fn predict(&self, row: &[f64]) -> Result<u8>;

    fn predict_all(&self, x: &[Vec<f64>]) -> Result<Vec<u8>> {
        x.par_iter().map(|r| self.predict(r)).collect()
    }
}

fn check_fit(x: &[Vec<f64>], y: &[u8]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "{} rows, {} labels",
            x.len(),
            y.len()
        )));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::Dimension("ragged training rows".into()));
    }
    if y.iter().any(|&c| c > 1) {
        return Err(Error::Domain("labels must be 0 or 1".into()));
    }
    Ok(d)
}

fn check_width(row: &[f64], d: Option<usize>) -> Result<()> {
    match d {
        None => Err(Error::Parameter("classifier is not fitted".into())),
        Some(d) if d != row.len() => Err(Error::Dimension(format!(
            "row width {}, fitted on {d}",
            row.len()
        ))),
        _ => Ok(()),
    }
}

/// Single class when `y` holds only one label.
fn constant_label(y: &[u8]) -> Option<u8> {
    let first = y[0];
    y.iter().all(|&c| c == first).then_some(first)
}

/// Per-feature affine map fitted on training data.
#[derive(Debug, Clone, Default)]
struct Scaler {
    shift: Vec<f64>,
    scale: Vec<f64>,
}

impl Scaler {
    fn standard(x: &[Vec<f64>]) -> Self {
        let n = x.len() as f64;
        let d = x[0].len();
        let mean: Vec<f64> = (0..d)
            .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        let sd: Vec<f64> = (0..d)
            .map(|j| {
                let v = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if v > 0.0 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            shift: mean,
            scale: sd,
        }
    }

    fn min_max(x: &[Vec<f64>]) -> Self {
        let d = x[0].len();
        let lo: Vec<f64> = (0..d)
            .map(|j| x.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min))
            .collect();
        let w: Vec<f64> = (0..d)
            .map(|j| {
                let hi = x.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
                if hi > lo[j] {
                    hi - lo[j]
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            shift: lo,
            scale: w,
        }
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(x, (s, w))| (x - s) / w)
            .collect()
    }
}

/// Full-batch gradient descent on the L2-penalised log loss over
/// standardised features.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    pub learning_rate: f64,
    pub iterations: usize,
    pub l2: f64,
    scaler: Scaler,
    weights: Vec<f64>,
    bias: f64,
    width: Option<usize>,
}

impl Default for LogisticRegression {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            iterations: 300,
            l2: 1e-3,
            scaler: Scaler::default(),
            weights: Vec::new(),
            bias: 0.0,
            width: None,
        }
    }
}

impl LogisticRegression {
    fn score(&self, z: &[f64]) -> f64 {
        self.bias + z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }
}

impl Classifier for LogisticRegression {
    fn fit(&mut self, x: &[Vec<f64>], y: &[u8]) -> Result<()> {
        let d = check_fit(x, y)?;
        self.scaler = Scaler::standard(x);
        let z: Vec<Vec<f64>> = x.iter().map(|r| self.scaler.apply(r)).collect();
        self.weights = vec![0.0; d];
        self.bias = 0.0;
        let n = x.len() as f64;
        for _ in 0..self.iterations {
            let (gw, gb) = z
                .par_iter()
                .zip(y)
                .fold(
                    || (vec![0.0; d], 0.0),
                    |(mut gw, gb), (r, &t)| {
                        let err = crate::rbm::sigmoid(self.score(r)) - f64::from(t);
                        for (g, v) in gw.iter_mut().zip(r) {
                            *g += err * v;
                        }
                        (gw, gb + err)
                    },
                )
                .reduce(
                    || (vec![0.0; d], 0.0),
                    |(mut a, ab), (b, bb)| {
                        for (x, y) in a.iter_mut().zip(b) {
                            *x += y;
                        }
                        (a, ab + bb)
                    },
                );
            for (w, g) in self.weights.iter_mut().zip(gw) {
                *w -= self.learning_rate * (g / n + self.l2 * *w);
            }
            self.bias -= self.learning_rate * gb / n;
        }
        self.width = Some(d);
        Ok(())
    }

    fn predict(&self, row: &[f64]) -> Result<u8> {
        check_width(row, self.width)?;
        Ok(u8::from(self.score(&self.scaler.apply(row)) > 0.0))
    }
}

/// Bernoulli naive Bayes on features binarised at their training median,
/// Laplace smoothing 1.
#[derive(Debug, Clone, Default)]
pub struct BernoulliNb {
    thresholds: Vec<f64>,
    /// `log_p[c][j]` = (log P(x_j = 1 | c), log P(x_j = 0 | c)).
    log_p: [Vec<(f64, f64)>; 2],
    log_prior: [f64; 2],
    width: Option<usize>,
}

impl Classifier for BernoulliNb {
    fn fit(&mut self, x: &[Vec<f64>], y: &[u8]) -> Result<()> {
        let d = check_fit(x, y)?;
        self.thresholds = (0..d)
            .map(|j| {
                let mut c: Vec<f64> = x.iter().map(|r| r[j]).collect();
                c.sort_by(f64::total_cmp);
                c[c.len() / 2]
            })
            .collect();
        let mut count = [0.0f64; 2];
        let mut ones = [vec![0.0f64; d], vec![0.0f64; d]];
        for (r, &c) in x.iter().zip(y) {
            count[c as usize] += 1.0;
            for j in 0..d {
                if r[j] >= self.thresholds[j] {
                    ones[c as usize][j] += 1.0;
                }
            }
        }
        let n = x.len() as f64;
        for c in 0..2 {
            self.log_prior[c] = if count[c] > 0.0 {
                (count[c] / n).ln()
            } else {
                f64::NEG_INFINITY
            };
            self.log_p[c] = ones[c]
                .iter()
                .map(|&k| {
                    let p = (k + 1.0) / (count[c] + 2.0);
                    (p.ln(), (1.0 - p).ln())
                })
                .collect();
        }
        self.width = Some(d);
        Ok(())
    }

    fn predict(&self, row: &[f64]) -> Result<u8> {
        check_width(row, self.width)?;
        let score = |c: usize| {
            self.log_prior[c]
                + row
                    .iter()
                    .zip(&self.thresholds)
                    .zip(&self.log_p[c])
                    .map(|((x, t), (on, off))| if x >= t { on } else { off })
                    .sum::<f64>()
        };
        Ok(u8::from(score(1) > score(0)))
    }
}

/// k nearest neighbours, Euclidean on min-max scaled features, majority
/// vote with ties going to the nearest neighbour's class.
#[derive(Debug, Clone)]
pub struct Knn {
    pub k: usize,
    scaler: Scaler,
    points: Vec<Vec<f64>>,
    labels: Vec<u8>,
}

impl Knn {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            scaler: Scaler::default(),
            points: Vec::new(),
            labels: Vec::new(),
        }
    }
}

impl Classifier for Knn {
    fn fit(&mut self, x: &[Vec<f64>], y: &[u8]) -> Result<()> {
        check_fit(x, y)?;
        if self.k == 0 {
            return Err(Error::Parameter("knn needs k ≥ 1".into()));
        }
        self.scaler = Scaler::min_max(x);
        self.points = x.iter().map(|r| self.scaler.apply(r)).collect();
        self.labels = y.to_vec();
        Ok(())
    }

    fn predict(&self, row: &[f64]) -> Result<u8> {
        check_width(row, self.points.first().map(Vec::len))?;
        let z = self.scaler.apply(row);
        let mut d: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        let k = self.k.min(d.len());
        let by = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        d.select_nth_unstable_by(k - 1, by);
        d.truncate(k);
        d.sort_by(by);
        let votes = d.iter().filter(|(_, i)| self.labels[*i] == 1).count();
        Ok(match (2 * votes).cmp(&k) {
            std::cmp::Ordering::Greater => 1,
            std::cmp::Ordering::Less => 0,
            std::cmp::Ordering::Equal => self.labels[d[0].1],
        })
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(u8),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[1] as f64 / n;
    2.0 * p * (1.0 - p)
}

fn majority(counts: [usize; 2]) -> u8 {
    u8::from(counts[1] > counts[0])
}

/// CART with Gini impurity. `feature_subset` > 0 draws that many candidate
/// features per node (random forest); 0 considers all of them.
fn grow<R: Rng>(
    x: &[Vec<f64>],
    y: &[u8],
    idx: &mut [usize],
    depth: usize,
    max_depth: usize,
    feature_subset: usize,
    rng: &mut R,
) -> Node {
    let mut counts = [0usize; 2];
    for &i in idx.iter() {
        counts[y[i] as usize] += 1;
    }
    if depth >= max_depth || counts[0] == 0 || counts[1] == 0 || idx.len() < 2 {
        return Node::Leaf(majority(counts));
    }
    let d = x[0].len();
    let mut features: Vec<usize> = (0..d).collect();
    if feature_subset > 0 && feature_subset < d {
        features.shuffle(rng);
        features.truncate(feature_subset);
        features.sort_unstable();
    }
    let parent = gini(counts);
    let n = idx.len() as f64;
    let mut best: Option<(f64, usize, f64)> = None;
    for &f in &features {
        idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let mut left = [0usize; 2];
        for pos in 1..idx.len() {
            left[y[idx[pos - 1]] as usize] += 1;
            let (lo, hi) = (x[idx[pos - 1]][f], x[idx[pos]][f]);
            if lo == hi {
                continue;
            }
            let right = [counts[0] - left[0], counts[1] - left[1]];
            let nl = pos as f64;
            let impurity = (nl * gini(left) + (n - nl) * gini(right)) / n;
            if best.map_or(true, |(b, _, _)| impurity < b - 1e-12) {
                best = Some((impurity, f, lo + (hi - lo) / 2.0));
            }
        }
    }
    match best {
        Some((impurity, feature, threshold)) if impurity < parent - 1e-12 => {
            let cut = stable_partition(idx, |&i| x[i][feature] <= threshold);
            let (l, r) = idx.split_at_mut(cut);
            Node::Split {
                feature,
                threshold,
                left: Box::new(grow(x, y, l, depth + 1, max_depth, feature_subset, rng)),
                right: Box::new(grow(x, y, r, depth + 1, max_depth, feature_subset, rng)),
            }
        }
        _ => Node::Leaf(majority(counts)),
    }
}

/// Stable in-place partition; returns the number of elements satisfying `pred`.
fn stable_partition<F: Fn(&usize) -> bool>(idx: &mut [usize], pred: F) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = idx.iter().partition(|i| pred(i));
    let cut = yes.len();
    idx[..cut].copy_from_slice(&yes);
    idx[cut..].copy_from_slice(&no);
    cut
}

fn walk(node: &Node, row: &[f64]) -> u8 {
    match node {
        Node::Leaf(c) => *c,
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            if row[*feature] <= *threshold {
                walk(left, row)
            } else {
                walk(right, row)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecisionTree {
    pub max_depth: usize,
    root: Option<Node>,
    width: Option<usize>,
}

impl DecisionTree {
    pub fn new(max_depth: usize) -> Self {
        Self {
            max_depth,
            root: None,
            width: None,
        }
    }

    pub fn depth(&self) -> usize {
        fn go(n: &Node) -> usize {
            match n {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(left).max(go(right)),
            }
        }
        self.root.as_ref().map_or(0, go)
    }
}

impl Classifier for DecisionTree {
    fn fit(&mut self, x: &[Vec<f64>], y: &[u8]) -> Result<()> {
        let d = check_fit(x, y)?;
        let mut idx: Vec<usize> = (0..x.len()).collect();
        let mut rng = rng_for(0, 0);
        self.root = Some(grow(x, y, &mut idx, 0, self.max_depth, 0, &mut rng));
        self.width = Some(d);
        Ok(())
    }

    fn predict(&self, row: &[f64]) -> Result<u8> {
        check_width(row, self.width)?;
        Ok(walk(self.root.as_ref().expect("fitted"), row))
    }
}

/// Bagged CART trees with `⌈√d⌉` candidate features per node.
#[derive(Debug, Clone)]
pub struct RandomForest {
    pub n_trees: usize,
    pub max_depth: usize,
    pub seed: u64,
    trees: Vec<Node>,
    width: Option<usize>,
}

impl RandomForest {
    pub fn new(n_trees: usize, max_depth: usize, seed: u64) -> Self {
        Self {
            n_trees,
            max_depth,
            seed,
            trees: Vec::new(),
            width: None,
        }
    }
}

impl Classifier for RandomForest {
    fn fit(&mut self, x: &[Vec<f64>], y: &[u8]) -> Result<()> {
        let d = check_fit(x, y)?;
        if let Some(c) = constant_label(y) {
            self.trees = vec![Node::Leaf(c)];
            self.width = Some(d);
            return Ok(());
        }
        let subset = (d as f64).sqrt().ceil() as usize;
        let base = derive_seed(self.seed, "random_forest");
        self.trees = (0..self.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng_for(base, t as u64);
                let mut idx: Vec<usize> = (0..x.len()).map(|_| rng.gen_range(0..x.len())).collect();
                grow(x, y, &mut idx, 0, self.max_depth, subset, &mut rng)
            })
            .collect();
        self.width = Some(d);
        Ok(())
    }

    fn predict(&self, row: &[f64]) -> Result<u8> {
        check_width(row, self.width)?;
        let votes = self.trees.iter().filter(|t| walk(t, row) == 1).count();
        Ok(u8::from(2 * votes > self.trees.len()))
    }
}

/// Inputs the QRBM balancer needs beyond the training rows.
#[derive(Debug, Clone)]
pub struct QrbmSetup {
    pub codec: BitCodec,
    pub embedding: RbmEmbedding,
    pub graph: Option<PegasusGraph>,
    pub trainer: QrbmTrainerConfig,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub methods: Vec<BalanceMethod>,
    pub classifiers: Vec<ClassifierKind>,
    pub smote_k: usize,
    /// When set, train and test are projected onto the codec features for
    /// every method; required for [`BalanceMethod::Qrbm`].
    pub qrbm: Option<QrbmSetup>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub method: BalanceMethod,
    pub classifier: ClassifierKind,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Recall of the attack class.
    pub minority_recall: f64,
    pub zero_division: bool,
    pub balance_ms: f64,
    pub fit_ms: f64,
    pub predict_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub averaging: String,
    pub cells: Vec<ReportCell>,
    pub balance: Vec<BalanceSummary>,
    pub test_hash: String,
}

impl ExperimentReport {
    pub fn cell(&self, method: BalanceMethod, classifier: ClassifierKind) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.classifier == classifier)
    }
}

pub fn balance_with(
    method: BalanceMethod,
    train: &TabularDataset,
    cfg: &ExperimentConfig,
) -> Result<BalanceResult> {
    let seed = derive_seed(cfg.seed, &format!("experiment/{method}"));
    match method {
        BalanceMethod::None => Ok(no_balance(train)),
        BalanceMethod::RandomOversample => random_oversample(train, seed),
        BalanceMethod::Smote => smote(train, cfg.smote_k, seed),
        BalanceMethod::Qrbm => {
            let q = cfg.qrbm.as_ref().ok_or_else(|| {
                Error::Config("qrbm balancing needs a codec, embedding and trainer config".into())
            })?;
            let trainer = QrbmTrainerConfig {
                seed,
                ..q.trainer.clone()
            };
            qrbm_balance(train, &q.codec, &q.embedding, q.graph.as_ref(), &trainer)
        }
    }
}

/// Balances `train` with every method, fits every classifier on each
/// balanced set and scores it on `test`. Cells are ordered method-major.
pub fn run_experiment(
    train: &TabularDataset,
    test: &TabularDataset,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    run_experiment_with(train, test, cfg, &mut |_| Ok(()))
}

/// As [`run_experiment`], handing each balanced training set to `sink`
/// before it is used.
pub fn run_experiment_with(
    train: &TabularDataset,
    test: &TabularDataset,
    cfg: &ExperimentConfig,
    sink: &mut dyn FnMut(&BalanceResult) -> Result<()>,
) -> Result<ExperimentReport> {
    if cfg.methods.is_empty() || cfg.classifiers.is_empty() {
        return Err(Error::Config(
            "experiment needs at least one method and one classifier".into(),
        ));
    }
    let test_hash = test.content_hash();
    let (train, test_view) = match &cfg.qrbm {
        Some(q) => (
            train.select_features(&q.codec.feature_names())?,
            test.select_features(&q.codec.feature_names())?,
        ),
        None => (train.clone(), test.clone()),
    };
    if train.features != test_view.features {
        return Err(Error::Dimension("train and test columns differ".into()));
    }
    let truth: Vec<usize> = test_view.classes().into_iter().map(usize::from).collect();

    let mut cells = Vec::new();
    let mut balance = Vec::new();
    for &method in &cfg.methods {
        let balanced = balance_with(method, &train, cfg)?;
        sink(&balanced)?;
        let y = balanced.dataset.classes();
        let row: Vec<ReportCell> = cfg
            .classifiers
            .par_iter()
            .map(|&kind| {
                let mut clf = kind.build(derive_seed(cfg.seed, &format!("classifier/{kind}")));
                let t = Instant::now();
                clf.fit(&balanced.dataset.rows, &y)?;
                let fit_ms = t.elapsed().as_secs_f64() * 1e3;
                let t = Instant::now();
                let pred: Vec<usize> = clf
                    .predict_all(&test_view.rows)?
                    .into_iter()
                    .map(usize::from)
                    .collect();
                let predict_ms = t.elapsed().as_secs_f64() * 1e3;
                let m = compute_metrics(&truth, &pred, 2)?;
                Ok(ReportCell {
                    method,
                    classifier: kind,
                    precision: m.precision,
                    recall: m.recall,
                    f1: m.f1,
                    minority_recall: m.per_class[1].recall,
                    zero_division: m.zero_division,
                    balance_ms: balanced.wall_ms,
                    fit_ms,
                    predict_ms,
                })
            })
            .collect::<Result<_>>()?;
        cells.extend(row);
        balance.push(balanced.summary());
    }
    if test.content_hash() != test_hash {
        return Err(Error::Validation(
            "test set changed during the experiment".into(),
        ));
    }
    Ok(ExperimentReport {
        averaging: AVERAGING.into(),
        cells,
        balance,
        test_hash,
    })
}

const REPORT_HEADER: [&str; 7] = [
    "method",
    "classifier",
    "precision",
    "recall",
    "f1",
    "minority_recall",
    "zero_division",
];
const TIMING_HEADER: [&str; 5] = ["method", "classifier", "balance_ms", "fit_ms", "predict_ms"];

/// Metrics, one row per grid cell. Timings go to a separate file so that
/// reruns produce identical reports.
pub fn write_report_csv<W: Write>(report: &ExperimentReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for c in &report.cells {
        w.write_record([
            c.method.name().to_string(),
            c.classifier.name().to_string(),
            c.precision.to_string(),
            c.recall.to_string(),
            c.f1.to_string(),
            c.minority_recall.to_string(),
            c.zero_division.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings_csv<W: Write>(report: &ExperimentReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TIMING_HEADER)?;
    for c in &report.cells {
        w.write_record([
            c.method.name().to_string(),
            c.classifier.name().to_string(),
            format!("{:.3}", c.balance_ms),
            format!("{:.3}", c.fit_ms),
            format!("{:.3}", c.predict_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn read_table<R: Read>(input: R, expected: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != expected {
        return Err(Error::Malformed(format!("unexpected header {header:?}")));
    }
    Ok(r.records().collect::<std::result::Result<_, _>>()?)
}

fn number(rec: &csv::StringRecord, row: usize, j: usize, header: &[&str]) -> Result<f64> {
    rec[j].parse().map_err(|_| Error::Cell {
        row: row + 1,
        column: header[j].into(),
        message: format!("not a number: {:?}", &rec[j]),
    })
}

/// Cells from a report file; timing fields are zero until merged with
/// [`read_timings_csv`].
pub fn read_report_csv<R: Read>(input: R) -> Result<Vec<ReportCell>> {
    read_table(input, &REPORT_HEADER)?
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            Ok(ReportCell {
                method: rec[0].parse()?,
                classifier: rec[1].parse()?,
                precision: number(rec, i, 2, &REPORT_HEADER)?,
                recall: number(rec, i, 3, &REPORT_HEADER)?,
                f1: number(rec, i, 4, &REPORT_HEADER)?,
                minority_recall: number(rec, i, 5, &REPORT_HEADER)?,
                zero_division: &rec[6] == "true",
                balance_ms: 0.0,
                fit_ms: 0.0,
                predict_ms: 0.0,
            })
        })
        .collect()
}

/// Fills the timing fields of matching cells.
pub fn read_timings_csv<R: Read>(input: R, cells: &mut [ReportCell]) -> Result<()> {
    for (i, rec) in read_table(input, &TIMING_HEADER)?.iter().enumerate() {
        let (method, classifier): (BalanceMethod, ClassifierKind) =
            (rec[0].parse()?, rec[1].parse()?);
        if let Some(c) = cells
            .iter_mut()
            .find(|c| c.method == method && c.classifier == classifier)
        {
            c.balance_ms = number(rec, i, 2, &TIMING_HEADER)?;
            c.fit_ms = number(rec, i, 3, &TIMING_HEADER)?;
            c.predict_ms = number(rec, i, 4, &TIMING_HEADER)?;
        }
    }
    Ok(())
}

fn pretty_classifier(k: ClassifierKind) -> &'static str {
    match k {
        ClassifierKind::LogisticRegression => "Logistic Regression",
        ClassifierKind::BernoulliNb => "Naive Bayes",
        ClassifierKind::Knn => "KNN",
        ClassifierKind::DecisionTree => "Decision Tree",
        ClassifierKind::RandomForest => "Random Forest",
    }
}

fn pretty_method(m: BalanceMethod) -> &'static str {
    match m {
        BalanceMethod::None => "no balancing",
        BalanceMethod::RandomOversample => "random oversampling",
        BalanceMethod::Smote => "SMOTE",
        BalanceMethod::Qrbm => "QRBM",
    }
}

/// One table per balancing method with a row per classifier.
pub fn render_text(cells: &[ReportCell], averaging: &str) -> String {
    let mut by_method: BTreeMap<BalanceMethod, Vec<&ReportCell>> = BTreeMap::new();
    for c in cells {
        by_method.entry(c.method).or_default().push(c);
    }
    let mut s = String::new();
    for (method, rows) in by_method {
        let _ = writeln!(
            s,
            "Evaluation metrics after {} ({averaging} average)",
            pretty_method(method)
        );
        let _ = writeln!(
            s,
            "{:<22} {:>9} {:>9} {:>9} {:>12}",
            "Classifier", "Precision", "Recall", "F1", "Balance (s)"
        );
        let _ = writeln!(s, "{}", "-".repeat(65));
        for c in rows {
            let _ = writeln!(
                s,
                "{:<22} {:>9.4} {:>9.4} {:>9.4} {:>12.3}",
                pretty_classifier(c.classifier),
                c.precision,
                c.recall,
                c.f1,
                c.balance_ms / 1e3
            );
        }
        s.push('\n');
    }
    s
}

/// Grouped bar chart of one metric: classifiers along x, one bar per method.
pub fn render_svg(cells: &[ReportCell], metric: &str) -> Result<String> {
    let value = |c: &ReportCell| -> Result<f64> {
        Ok(match metric {
            "precision" => c.precision,
            "recall" => c.recall,
            "f1" => c.f1,
            "minority_recall" => c.minority_recall,
            other => return Err(Error::Parameter(format!("unknown metric {other:?}"))),
        })
    };
    let mut classifiers: Vec<ClassifierKind> = cells.iter().map(|c| c.classifier).collect();
    classifiers.sort();
    classifiers.dedup();
    let mut methods: Vec<BalanceMethod> = cells.iter().map(|c| c.method).collect();
    methods.sort();
    methods.dedup();
    const PALETTE: [&str; 4] = ["#7f7f7f", "#1f77b4", "#ff7f0e", "#2ca02c"];
    let (w, h, top, bottom, left) = (760.0, 360.0, 30.0, 60.0, 50.0);
    let plot_h = h - top - bottom;
    let group_w = (w - left - 20.0) / classifiers.len().max(1) as f64;
    let bar_w = group_w * 0.8 / methods.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="18" font-size="13">{metric}</text>"#
    );
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let y = top + plot_h * (1.0 - v);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" x2="{}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
            w - 20.0,
            left - 4.0,
            y + 4.0
        );
    }
    for (gi, k) in classifiers.iter().enumerate() {
        let gx = left + gi as f64 * group_w + group_w * 0.1;
        for (mi, m) in methods.iter().enumerate() {
            if let Some(c) = cells.iter().find(|c| c.classifier == *k && c.method == *m) {
                let v = value(c)?.clamp(0.0, 1.0);
                let bh = plot_h * v;
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.1}" y="{:.1}" width="{bar_w:.1}" height="{bh:.1}" fill="{}"><title>{m} {k}: {v:.4}</title></rect>"#,
                    gx + mi as f64 * bar_w,
                    top + plot_h - bh,
                    PALETTE[mi % PALETTE.len()]
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            gx + group_w * 0.4,
            h - bottom + 16.0,
            pretty_classifier(*k)
        );
    }
    for (mi, m) in methods.iter().enumerate() {
        let x = left + mi as f64 * 150.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            h - 22.0,
            PALETTE[mi % PALETTE.len()],
            x + 14.0,
            h - 13.0,
            pretty_method(*m)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
