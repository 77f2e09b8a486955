//! Classical binary RBM: energy, conditionals, Gibbs sampling,
//! contrastive divergence and exact (enumeration) oracles for small models.
//!
//! Energy of a configuration:
//!
//! ```text
//! E(v, h) = −Σ_i b_i v_i − Σ_j c_j h_j − Σ_ij v_i W_ij h_j
//! ```

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `n_visible + n_hidden` accepted by the joint enumeration oracles.
pub const MAX_EXACT_UNITS: usize = 20;

/// Additive smoothing applied to both sides of [`kl_to_data`].
pub const KL_SMOOTHING: f64 = 1e-9;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A matrix whose entries are all 0 or 1, one sample per row.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMatrix(Array2<u8>);

impl BinaryMatrix {
    pub fn new(data: Array2<u8>) -> Result<Self> {
        if let Some(bad) = data.iter().find(|&&x| x > 1) {
            return Err(Error::Domain(format!("binary matrix entry {bad}")));
        }
        Ok(Self(data.as_standard_layout().into_owned()))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(Array2::zeros((rows, cols)))
    }

    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R], cols: usize) -> Result<Self> {
        let mut flat = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {i} has width {}, expected {cols}",
                    r.len()
                )));
            }
            flat.extend_from_slice(r);
        }
        let data = Array2::from_shape_vec((rows.len(), cols), flat)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        Self::new(data)
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn row(&self, i: usize) -> &[u8] {
        let cols = self.ncols();
        &self.0.as_slice().expect("standard layout")[i * cols..(i + 1) * cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        (0..self.nrows()).map(move |i| self.row(i))
    }

    pub fn as_array(&self) -> &Array2<u8> {
        &self.0
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.0.mapv(f64::from)
    }

    /// Rows at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self(self.0.select(Axis(0), indices))
    }

    /// First `n` rows.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.nrows());
        Self(self.0.slice(ndarray::s![..n, ..]).to_owned())
    }

    pub fn vstack(parts: &[BinaryMatrix], cols: usize) -> Result<Self> {
        let mut rows: Vec<&[u8]> = Vec::new();
        for p in parts {
            if p.ncols() != cols && p.nrows() > 0 {
                return Err(Error::Dimension(format!("width {} vs {cols}", p.ncols())));
            }
            rows.extend(p.rows());
        }
        Self::from_rows(&rows, cols)
    }
}

/// Weights `W` (n_visible × n_hidden), visible biases `b`, hidden biases `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmParams {
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
}

impl RbmParams {
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            weights: Array2::zeros((n_visible, n_hidden)),
            visible_bias: Array1::zeros(n_visible),
            hidden_bias: Array1::zeros(n_hidden),
        }
    }

    /// `W ~ U(−0.1, 0.1)`, zero biases.
    pub fn random<R: Rng + ?Sized>(n_visible: usize, n_hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(n_visible, n_hidden);
        p.weights.mapv_inplace(|_| rng.gen_range(-0.1..0.1));
        p
    }

    pub fn from_parts(
        weights: Array2<f64>,
        visible_bias: Array1<f64>,
        hidden_bias: Array1<f64>,
    ) -> Result<Self> {
        let p = Self {
            weights,
            visible_bias,
            hidden_bias,
        };
        p.check()?;
        Ok(p)
    }

    pub fn n_visible(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.ncols()
    }

    pub fn check(&self) -> Result<()> {
        if self.visible_bias.len() != self.n_visible() || self.hidden_bias.len() != self.n_hidden()
        {
            return Err(Error::Dimension(format!(
                "W is {}x{}, b has {}, c has {}",
                self.n_visible(),
                self.n_hidden(),
                self.visible_bias.len(),
                self.hidden_bias.len()
            )));
        }
        let finite = self
            .weights
            .iter()
            .chain(&self.visible_bias)
            .chain(&self.hidden_bias)
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Domain("non-finite RBM parameter".into()));
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &RbmParams) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .chain(self.visible_bias.iter().zip(&other.visible_bias))
            .chain(self.hidden_bias.iter().zip(&other.hidden_bias))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what} has length {got}, expected {want}"
        )))
    }
}

pub fn rbm_energy(p: &RbmParams, v: &[u8], h: &[u8]) -> Result<f64> {
    check_len("v", v.len(), p.n_visible())?;
    check_len("h", h.len(), p.n_hidden())?;
    let vf: Array1<f64> = v.iter().map(|&x| f64::from(x)).collect();
    let hf: Array1<f64> = h.iter().map(|&x| f64::from(x)).collect();
    Ok(-p.visible_bias.dot(&vf) - p.hidden_bias.dot(&hf) - vf.dot(&p.weights.dot(&hf)))
}

/// `P(h_j = 1 | v) = σ(c_j + Σ_i W_ij v_i)`.
pub fn prob_h_given_v(p: &RbmParams, v: &[u8]) -> Result<Array1<f64>> {
    check_len("v", v.len(), p.n_visible())?;
    let vf: Array1<f64> = v.iter().map(|&x| f64::from(x)).collect();
    Ok(hidden_probs(p, vf.view()))
}

/// `P(v_i = 1 | h) = σ(b_i + Σ_j W_ij h_j)`.
pub fn prob_v_given_h(p: &RbmParams, h: &[u8]) -> Result<Array1<f64>> {
    check_len("h", h.len(), p.n_hidden())?;
    let hf: Array1<f64> = h.iter().map(|&x| f64::from(x)).collect();
    Ok(visible_probs(p, hf.view()))
}

fn hidden_probs(p: &RbmParams, v: ArrayView1<f64>) -> Array1<f64> {
    (v.dot(&p.weights) + &p.hidden_bias).mapv(sigmoid)
}

fn visible_probs(p: &RbmParams, h: ArrayView1<f64>) -> Array1<f64> {
    (p.weights.dot(&h) + &p.visible_bias).mapv(sigmoid)
}

/// `H = σ(c + V W)` for every row of `v`.
pub fn hidden_probs_batch(p: &RbmParams, v: &Array2<f64>) -> Array2<f64> {
    (v.dot(&p.weights) + &p.hidden_bias).mapv(sigmoid)
}

fn bernoulli<R: Rng + ?Sized>(probs: &Array1<f64>, rng: &mut R) -> Array1<f64> {
    probs.mapv(|q| if rng.gen::<f64>() < q { 1.0 } else { 0.0 })
}

fn to_bits(x: &Array1<f64>) -> Vec<u8> {
    x.iter().map(|&b| b as u8).collect()
}

/// Alternates `h ~ P(h|v)`, `v ~ P(v|h)` `k` times starting from `v0`,
/// returning the final `(v_k, h_k)` where `h_k` was sampled from `v_{k−1}`.
pub fn gibbs_chain<R: Rng + ?Sized>(
    p: &RbmParams,
    v0: &[u8],
    k: usize,
    rng: &mut R,
) -> Result<(Vec<u8>, Vec<u8>)> {
    if k == 0 {
        return Err(Error::Parameter("Gibbs chain needs k >= 1".into()));
    }
    check_len("v0", v0.len(), p.n_visible())?;
    if v0.iter().any(|&x| x > 1) {
        return Err(Error::Domain("v0 must be binary".into()));
    }
    let mut v: Array1<f64> = v0.iter().map(|&x| f64::from(x)).collect();
    let mut h = Array1::zeros(p.n_hidden());
    for _ in 0..k {
        h = bernoulli(&hidden_probs(p, v.view()), rng);
        v = bernoulli(&visible_probs(p, h.view()), rng);
    }
    Ok((to_bits(&v), to_bits(&h)))
}

/// One contrastive-divergence step on `batch`.
///
/// The positive phase uses hidden probabilities of the data rows; the
/// negative phase runs a `k`-step Gibbs chain from each data row and uses
/// hidden probabilities of the reconstruction.
pub fn cd_update<R: Rng + ?Sized>(
    p: &RbmParams,
    batch: &BinaryMatrix,
    k: usize,
    learning_rate: f64,
    rng: &mut R,
) -> Result<RbmParams> {
    if batch.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    if learning_rate < 0.0 || !learning_rate.is_finite() {
        return Err(Error::Parameter(format!("learning rate {learning_rate}")));
    }
    if k == 0 {
        return Err(Error::Parameter("CD needs k >= 1".into()));
    }
    check_len("batch width", batch.ncols(), p.n_visible())?;
    let m = batch.nrows() as f64;
    let v0 = batch.to_f64();
    let h0 = hidden_probs_batch(p, &v0);

    let mut vk = Array2::zeros(v0.raw_dim());
    for (r, row) in v0.outer_iter().enumerate() {
        let mut v = row.to_owned();
        for _ in 0..k {
            let h = bernoulli(&hidden_probs(p, v.view()), rng);
            v = bernoulli(&visible_probs(p, h.view()), rng);
        }
        vk.row_mut(r).assign(&v);
    }
    let hk = hidden_probs_batch(p, &vk);

    let mut next = p.clone();
    next.weights = &p.weights + &((v0.t().dot(&h0) - vk.t().dot(&hk)) * (learning_rate / m));
    next.visible_bias =
        &p.visible_bias + &((v0.sum_axis(Axis(0)) - vk.sum_axis(Axis(0))) * (learning_rate / m));
    next.hidden_bias =
        &p.hidden_bias + &((h0.sum_axis(Axis(0)) - hk.sum_axis(Axis(0))) * (learning_rate / m));
    Ok(next)
}

fn check_exact(p: &RbmParams) -> Result<()> {
    let units = p.n_visible() + p.n_hidden();
    if units > MAX_EXACT_UNITS {
        return Err(Error::Capacity(format!(
            "{units} units exceed the enumeration limit of {MAX_EXACT_UNITS}"
        )));
    }
    Ok(())
}

/// Bits of joint state `index`: visible unit `i` is bit `i`, hidden unit `j` is bit `n_visible + j`.
pub fn joint_state(index: usize, n_visible: usize, n_hidden: usize) -> (Vec<u8>, Vec<u8>) {
    let v = (0..n_visible).map(|i| ((index >> i) & 1) as u8).collect();
    let h = (0..n_hidden)
        .map(|j| ((index >> (n_visible + j)) & 1) as u8)
        .collect();
    (v, h)
}

/// Index of visible state `v` in marginal tables (bit `i` = `v_i`).
pub fn visible_index(v: &[u8]) -> usize {
    v.iter()
        .enumerate()
        .fold(0, |acc, (i, &b)| acc | (usize::from(b) << i))
}

fn joint_log_weights(p: &RbmParams) -> Result<Vec<f64>> {
    check_exact(p)?;
    p.check()?;
    let (nv, nh) = (p.n_visible(), p.n_hidden());
    (0..1usize << (nv + nh))
        .map(|s| {
            let (v, h) = joint_state(s, nv, nh);
            rbm_energy(p, &v, &h).map(|e| -e)
        })
        .collect()
}

/// `Z = Σ_{v,h} exp(−E(v, h))` by enumeration.
pub fn partition_function(p: &RbmParams) -> Result<f64> {
    Ok(joint_log_weights(p)?.iter().map(|w| w.exp()).sum())
}

/// `P(v, h)` for every joint state, indexed as in [`joint_state`].
pub fn exact_distribution(p: &RbmParams) -> Result<Vec<f64>> {
    let logw = joint_log_weights(p)?;
    Ok(normalize_log(&logw))
}

fn normalize_log(logw: &[f64]) -> Vec<f64> {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Exact marginal `P(v)` from the free energy, indexed by [`visible_index`].
pub fn visible_marginal(p: &RbmParams) -> Result<Vec<f64>> {
    p.check()?;
    let nv = p.n_visible();
    if nv > MAX_EXACT_UNITS {
        return Err(Error::Capacity(format!(
            "{nv} visible units exceed {MAX_EXACT_UNITS}"
        )));
    }
    let logw: Vec<f64> = (0..1usize << nv)
        .map(|s| {
            let v: Array1<f64> = (0..nv).map(|i| ((s >> i) & 1) as f64).collect();
            let act = v.dot(&p.weights) + &p.hidden_bias;
            p.visible_bias.dot(&v) + act.iter().map(|&a| softplus(a)).sum::<f64>()
        })
        .collect();
    Ok(normalize_log(&logw))
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Frequencies of each visible state among the rows of `data`.
pub fn empirical_distribution(data: &BinaryMatrix) -> Result<Vec<f64>> {
    let nv = data.ncols();
    if nv > MAX_EXACT_UNITS {
        return Err(Error::Capacity(format!(
            "{nv} columns exceed {MAX_EXACT_UNITS}"
        )));
    }
    if data.is_empty() {
        return Err(Error::InsufficientData("no rows".into()));
    }
    let mut dist = vec![0.0; 1 << nv];
    for row in data.rows() {
        dist[visible_index(row)] += 1.0;
    }
    let n = data.nrows() as f64;
    dist.iter_mut().for_each(|x| *x /= n);
    Ok(dist)
}

/// `KL(data ‖ model)` over visible states.
pub fn kl_to_data(p: &RbmParams, data_dist: &[f64]) -> Result<f64> {
    let model = visible_marginal(p)?;
    check_len("data distribution", data_dist.len(), model.len())?;
    Ok(kl_divergence(data_dist, &model))
}

/// Smoothed `KL(p ‖ q)`; both sides get [`KL_SMOOTHING`] added and are renormalised.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    let norm_p = 1.0 + KL_SMOOTHING * p.len() as f64;
    let norm_q = 1.0 + KL_SMOOTHING * q.len() as f64;
    let kl: f64 = p
        .iter()
        .zip(q)
        .map(|(&a, &b)| {
            let a = (a + KL_SMOOTHING) / norm_p;
            let b = (b + KL_SMOOTHING) / norm_q;
            a * (a / b).ln()
        })
        .sum();
    kl.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdConfig {
    pub k: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for CdConfig {
    fn default() -> Self {
        Self {
            k: 1,
            learning_rate: 0.05,
            batch_size: 64,
            epochs: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// KL to the data for small models, mean reconstruction error otherwise.
    pub objective: f64,
    pub chain_break_rate: f64,
    pub wall_ms: f64,
}

/// Per-epoch objective: exact KL when the visible layer is small enough,
/// otherwise mean squared one-step reconstruction error.
pub fn objective(p: &RbmParams, data: &BinaryMatrix, data_dist: Option<&[f64]>) -> Result<f64> {
    if let Some(dist) = data_dist {
        return kl_to_data(p, dist);
    }
    let v = data.to_f64();
    let h = hidden_probs_batch(p, &v);
    let recon = (h.dot(&p.weights.t()) + &p.visible_bias).mapv(sigmoid);
    Ok((&v - &recon).mapv(|d| d * d).mean().unwrap_or(0.0))
}

/// Mini-batch CD-k training. Rows are reshuffled every epoch.
pub fn train_cd<R: Rng + ?Sized>(
    init: RbmParams,
    data: &BinaryMatrix,
    cfg: &CdConfig,
    rng: &mut R,
) -> Result<(RbmParams, Vec<EpochRecord>)> {
    if data.is_empty() {
        return Err(Error::InsufficientData("no training rows".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Parameter("batch_size must be positive".into()));
    }
    check_len("data width", data.ncols(), init.n_visible())?;
    let data_dist = if data.ncols() <= MAX_EXACT_UNITS {
        Some(empirical_distribution(data)?)
    } else {
        None
    };
    let mut params = init;
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let started = std::time::Instant::now();
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.select(chunk);
            params = cd_update(&params, &batch, cfg.k, cfg.learning_rate, rng)?;
        }
        log.push(EpochRecord {
            epoch,
            objective: objective(&params, data, data_dist.as_deref())?,
            chain_break_rate: 0.0,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok((params, log))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub epoch: usize,
    #[serde(default)]
    pub method: String,
}

/// JSON checkpoint: dimensions, row-major `W`, `b`, `c` and training metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n_visible: usize,
    pub n_hidden: usize,
    pub weights: Vec<f64>,
    pub visible_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub metadata: TrainingMetadata,
}

impl Checkpoint {
    pub fn new(p: &RbmParams, metadata: TrainingMetadata) -> Self {
        Self {
            n_visible: p.n_visible(),
            n_hidden: p.n_hidden(),
            weights: p.weights.iter().copied().collect(),
            visible_bias: p.visible_bias.to_vec(),
            hidden_bias: p.hidden_bias.to_vec(),
            metadata,
        }
    }

    pub fn params(&self) -> Result<RbmParams> {
        let w = Array2::from_shape_vec((self.n_visible, self.n_hidden), self.weights.clone())
            .map_err(|e| Error::Dimension(e.to_string()))?;
        RbmParams::from_parts(
            w,
            Array1::from(self.visible_bias.clone()),
            Array1::from(self.hidden_bias.clone()),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
