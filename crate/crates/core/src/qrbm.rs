//! RBM training with annealer reads in the negative phase, and synthetic
//! record generation from a trained model.
//!
//! Each mini-batch update maps the current parameters onto the fixed
//! embedding, asks the sampler for `num_reads` reads, decodes them by
//! majority vote and applies
//!
//! ```text
//! W += ε (VᵀH / m − V′ᵀH′ / m₁)
//! b += ε (ΣV / m − ΣV′ / m₁)
//! c += ε (ΣH / m − ΣH′ / m₁)
//! ```
//!
//! where `H = σ(c + VW)` are hidden probabilities of the batch and
//! `(V′, H′)` the decoded reads.

use std::io::Write;
use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::embedding::{validate_embedding, RbmEmbedding};
use crate::error::{Error, Result};
use crate::ising::{decode_samples, rbm_to_ising, SampleSet};
use crate::pegasus::PegasusGraph;
use crate::rbm::{
    empirical_distribution, hidden_probs_batch, objective, BinaryMatrix, EpochRecord, RbmParams,
    MAX_EXACT_UNITS,
};
use crate::samplers::{Backend, Sampler, SamplerConfig};
use crate::seed::{derive_seed, rng_for};

/// Energy tolerance used when re-checking every returned sample set.
const SAMPLE_TOLERANCE: f64 = 1e-6;

/// Early stop once the objective improves by less than `threshold` for
/// `patience` consecutive epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plateau {
    pub threshold: f64,
    pub patience: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QrbmTrainerConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Reads per anneal job (`m₁`).
    pub num_reads: usize,
    pub epochs: usize,
    pub chain_strength: f64,
    /// Scale applied to the mapped problem. `None` picks `1 / beta_max` for
    /// annealing backends, so the final sweep samples at the model's own
    /// temperature, and `1` for the exact backend.
    pub beta_eff: Option<f64>,
    pub sampler: Backend,
    pub sweeps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub seed: u64,
    pub plateau: Option<Plateau>,
}

impl Default for QrbmTrainerConfig {
    fn default() -> Self {
        let sa = SamplerConfig::default();
        Self {
            learning_rate: 0.05,
            batch_size: 64,
            num_reads: 100,
            epochs: 200,
            chain_strength: 2.0,
            beta_eff: None,
            sampler: Backend::Sa,
            sweeps: sa.sweeps,
            beta_min: sa.beta_min,
            beta_max: sa.beta_max,
            seed: 0,
            plateau: None,
        }
    }
}

impl QrbmTrainerConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be at least 1".into()));
        }
        if !(self.chain_strength > 0.0 && self.chain_strength.is_finite()) {
            return Err(Error::Parameter(format!(
                "chain_strength {} must be positive",
                self.chain_strength
            )));
        }
        if let Some(b) = self.beta_eff {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Parameter(format!("beta_eff {b} must be positive")));
            }
        }
        self.sampler_config(0).check()
    }

    pub fn resolved_beta_eff(&self) -> f64 {
        match (self.beta_eff, &self.sampler) {
            (Some(b), _) => b,
            (None, Backend::Exact) => 1.0,
            (None, _) => 1.0 / self.beta_max,
        }
    }

    pub fn sampler_config(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            num_reads: self.num_reads,
            seed,
            sweeps: self.sweeps,
            beta_min: self.beta_min,
            beta_max: self.beta_max,
        }
    }
}

/// Outcome of one mini-batch update.
#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub params: RbmParams,
    pub chain_break_rate: f64,
    pub samples: SampleSet,
}

/// Applies one update for `batch`, drawing the negative phase from `sampler`
/// with job seed `job_seed`.
pub fn qrbm_update(
    params: &RbmParams,
    batch: &BinaryMatrix,
    emb: &RbmEmbedding,
    cfg: &QrbmTrainerConfig,
    sampler: &dyn Sampler,
    job_seed: u64,
) -> Result<UpdateOutcome> {
    if batch.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    if batch.ncols() != params.n_visible() {
        return Err(Error::Dimension(format!(
            "batch width {} but model has {} visible units",
            batch.ncols(),
            params.n_visible()
        )));
    }
    let v = batch.to_f64();
    let h = hidden_probs_batch(params, &v);
    let problem = rbm_to_ising(params, emb, cfg.chain_strength, cfg.resolved_beta_eff())?;
    let samples = sampler.sample(&problem, &cfg.sampler_config(job_seed))?;
    samples.verify(&problem, SAMPLE_TOLERANCE)?;
    let decoded = decode_samples(&samples, emb, job_seed)?;
    let vn = decoded.visible.to_f64();
    let hn = decoded.hidden.to_f64();
    let m = v.nrows() as f64;
    let m1 = vn.nrows() as f64;
    let eps = cfg.learning_rate;

    let mut next = params.clone();
    let dw: Array2<f64> = v.t().dot(&h) / m - vn.t().dot(&hn) / m1;
    next.weights = &params.weights + &(dw * eps);
    next.visible_bias =
        &params.visible_bias + &((v.sum_axis(Axis(0)) / m - vn.sum_axis(Axis(0)) / m1) * eps);
    next.hidden_bias =
        &params.hidden_bias + &((h.sum_axis(Axis(0)) / m - hn.sum_axis(Axis(0)) / m1) * eps);
    next.check()?;
    Ok(UpdateOutcome {
        params: next,
        chain_break_rate: decoded.chain_break_rate,
        samples,
    })
}

#[derive(Debug, Clone)]
pub struct TrainedQrbm {
    pub params: RbmParams,
    pub log: Vec<EpochRecord>,
}

fn check_inputs(data: &BinaryMatrix, params: &RbmParams, emb: &RbmEmbedding) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InsufficientData("no training rows".into()));
    }
    if data.ncols() != emb.n_visible()
        || params.n_visible() != emb.n_visible()
        || params.n_hidden() != emb.n_hidden()
    {
        return Err(Error::Dimension(format!(
            "data width {}, model {}x{}, embedding {}x{}",
            data.ncols(),
            params.n_visible(),
            params.n_hidden(),
            emb.n_visible(),
            emb.n_hidden()
        )));
    }
    Ok(())
}

/// Trains from the default initialisation with the configured backend.
/// When `graph` is given the embedding is validated against it first.
pub fn train_qrbm(
    data: &BinaryMatrix,
    cfg: &QrbmTrainerConfig,
    emb: &RbmEmbedding,
    graph: Option<&PegasusGraph>,
) -> Result<TrainedQrbm> {
    if let Some(g) = graph {
        let report = validate_embedding(g, emb)?;
        if !report.valid {
            return Err(Error::Validation(format!(
                "embedding has {} violations on P_{}",
                report.violations(),
                g.m()
            )));
        }
    }
    let mut rng = rng_for(derive_seed(cfg.seed, "qrbm/init"), 0);
    let init = RbmParams::random(emb.n_visible(), emb.n_hidden(), &mut rng);
    let sampler = cfg.sampler.sampler();
    train_qrbm_from(init, data, cfg, emb, sampler.as_ref())
}

/// Trains from `init` with an explicit sampler.
pub fn train_qrbm_from(
    init: RbmParams,
    data: &BinaryMatrix,
    cfg: &QrbmTrainerConfig,
    emb: &RbmEmbedding,
    sampler: &dyn Sampler,
) -> Result<TrainedQrbm> {
    cfg.check()?;
    check_inputs(data, &init, emb)?;
    let data_dist = if data.ncols() <= MAX_EXACT_UNITS {
        Some(empirical_distribution(data)?)
    } else {
        None
    };
    let mut shuffle = rng_for(derive_seed(cfg.seed, "qrbm/shuffle"), 0);
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    let mut params = init;
    let mut log: Vec<EpochRecord> = Vec::with_capacity(cfg.epochs);
    let mut stale = 0usize;
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle);
        let mut breaks = 0.0;
        let mut jobs = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = data.select(chunk);
            let seed = derive_seed(cfg.seed, &format!("qrbm/update/{epoch}/{b}"));
            let out = qrbm_update(&params, &batch, emb, cfg, sampler, seed).map_err(|e| {
                Error::Training {
                    epoch,
                    source: Box::new(e),
                }
            })?;
            params = out.params;
            breaks += out.chain_break_rate;
            jobs += 1;
        }
        let value = objective(&params, data, data_dist.as_deref())?;
        if let (Some(p), Some(prev)) = (cfg.plateau, log.last()) {
            stale = if prev.objective - value < p.threshold {
                stale + 1
            } else {
                0
            };
        }
        log.push(EpochRecord {
            epoch,
            objective: value,
            chain_break_rate: breaks / jobs as f64,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        if matches!(cfg.plateau, Some(p) if stale >= p.patience.max(1)) {
            break;
        }
    }
    Ok(TrainedQrbm { params, log })
}

/// Writes `epoch,objective,chain_break_rate,wall_ms` rows.
pub fn write_training_log<W: Write>(log: &[EpochRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "objective", "chain_break_rate", "wall_ms"])?;
    for r in log {
        w.write_record([
            r.epoch.to_string(),
            r.objective.to_string(),
            r.chain_break_rate.to_string(),
            format!("{:.3}", r.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Generated rows together with the sample sets they were decoded from.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub rows: BinaryMatrix,
    /// One sample set per anneal job, in job order; job `k` used seed
    /// `metadata.seed`.
    pub jobs: Vec<SampleSet>,
}

/// Runs `⌈n_samples / num_reads⌉` jobs and keeps the first `n_samples`
/// decoded visible rows.
pub fn generate_synthetic(
    params: &RbmParams,
    emb: &RbmEmbedding,
    cfg: &QrbmTrainerConfig,
    n_samples: usize,
) -> Result<Synthetic> {
    let sampler = cfg.sampler.sampler();
    generate_synthetic_with(params, emb, cfg, sampler.as_ref(), n_samples)
}

pub fn generate_synthetic_with(
    params: &RbmParams,
    emb: &RbmEmbedding,
    cfg: &QrbmTrainerConfig,
    sampler: &dyn Sampler,
    n_samples: usize,
) -> Result<Synthetic> {
    if n_samples == 0 {
        return Err(Error::Parameter("n_samples must be at least 1".into()));
    }
    cfg.check()?;
    let problem = rbm_to_ising(params, emb, cfg.chain_strength, cfg.resolved_beta_eff())?;
    let n_jobs = n_samples.div_ceil(cfg.num_reads);
    let mut parts = Vec::with_capacity(n_jobs);
    let mut jobs = Vec::with_capacity(n_jobs);
    for k in 0..n_jobs {
        let seed = derive_seed(cfg.seed, &format!("qrbm/generate/{k}"));
        let ss = sampler.sample(&problem, &cfg.sampler_config(seed))?;
        ss.verify(&problem, SAMPLE_TOLERANCE)?;
        parts.push(decode_samples(&ss, emb, seed)?.visible);
        jobs.push(ss);
    }
    let rows = BinaryMatrix::vstack(&parts, emb.n_visible())?.truncated(n_samples);
    Ok(Synthetic { rows, jobs })
}
