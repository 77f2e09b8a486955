//! Sampling backends for [`IsingProblem`]s.
//!
//! * [`ExactSampler`] enumerates every state and draws i.i.d. reads from
//!   the Boltzmann distribution at unit temperature. It is the oracle.
//! * [`SimulatedAnnealing`] runs independent single-spin Metropolis restarts
//!   under a geometric inverse-temperature schedule. It stands in for the
//!   annealer.
//! * [`RemoteSampler`] posts the problem to an HTTP service speaking the
//!   JSON wire contract below and validates what comes back.
//!
//! Read `r` of a job with seed `s` always draws from stream `r` of `s`, so
//! parallel and serial execution give identical sample sets.
//!
//! Wire contract, `POST /sample`:
//!
//! ```text
//! request  { "h": {"<qubit>": bias}, "J": [[a, b, value], ...], "num_reads": n, "seed": s }
//! response { "reads": [{ "spins": {"<qubit>": ±1}, "energy": e, "occurrences": k }, ...],
//!            "backend": "<name>" }
//! ```

use std::collections::BTreeMap;
use std::io::Read;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::{
    CompiledIsing, IsingProblem, Qubit, SampleMetadata, SampleSet, Spin, SpinSample,
};
use crate::seed::rng_for;

/// Largest problem the exact sampler will enumerate.
pub const MAX_EXACT_SPINS: usize = 22;

/// Energy tolerance applied to responses from a remote sampler.
pub const REMOTE_ENERGY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub num_reads: usize,
    pub seed: u64,
    /// Metropolis sweeps per read (simulated annealing only).
    pub sweeps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            num_reads: 100,
            seed: 0,
            sweeps: 1000,
            beta_min: 0.1,
            beta_max: 3.0,
        }
    }
}

impl SamplerConfig {
    pub fn check(&self) -> Result<()> {
        if self.num_reads == 0 {
            return Err(Error::Parameter("num_reads must be at least 1".into()));
        }
        if self.sweeps == 0 {
            return Err(Error::Parameter("sweeps must be at least 1".into()));
        }
        if !(self.beta_min > 0.0 && self.beta_min < self.beta_max && self.beta_max.is_finite()) {
            return Err(Error::Parameter(format!(
                "beta schedule {} -> {} must satisfy 0 < beta_min < beta_max",
                self.beta_min, self.beta_max
            )));
        }
        Ok(())
    }

    /// One inverse temperature per sweep, geometric from `beta_min` to `beta_max`.
    pub fn beta_schedule(&self) -> Vec<f64> {
        if self.sweeps == 1 {
            return vec![self.beta_max];
        }
        let ratio = (self.beta_max / self.beta_min).ln() / (self.sweeps - 1) as f64;
        (0..self.sweeps)
            .map(|i| self.beta_min * (ratio * i as f64).exp())
            .collect()
    }

    fn describe_schedule(&self) -> String {
        format!(
            "geometric beta {} -> {} over {} sweeps",
            self.beta_min, self.beta_max, self.sweeps
        )
    }
}

pub trait Sampler: Send + Sync {
    fn name(&self) -> &str;
    fn sample(&self, p: &IsingProblem, cfg: &SamplerConfig) -> Result<SampleSet>;
}

/// Selector used by configuration files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Backend {
    Exact,
    Sa,
    Remote { endpoint: String },
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Sa
    }
}

impl Backend {
    pub fn sampler(&self) -> Box<dyn Sampler> {
        match self {
            Backend::Exact => Box::new(ExactSampler),
            Backend::Sa => Box::new(SimulatedAnnealing),
            Backend::Remote { endpoint } => Box::new(RemoteSampler::new(endpoint.clone())),
        }
    }
}

/// Full Boltzmann table of a small problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactTable {
    pub variables: Vec<Qubit>,
    /// Energy of state `x`, where bit `k` of `x` set means variable `k` is +1.
    pub energies: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl ExactTable {
    pub fn spins(&self, state: usize) -> Vec<Spin> {
        (0..self.variables.len())
            .map(|k| if (state >> k) & 1 == 1 { 1 } else { -1 })
            .collect()
    }

    pub fn ground_energy(&self) -> f64 {
        self.energies.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn state_of(&self, spins: &[Spin]) -> usize {
        spins
            .iter()
            .enumerate()
            .fold(0, |acc, (k, &s)| acc | (usize::from(s == 1) << k))
    }
}

/// Enumerates all `2^n` states (Gray-code order) at unit temperature.
pub fn exact_table(p: &IsingProblem) -> Result<ExactTable> {
    let c = p.compile();
    let n = c.len();
    if n > MAX_EXACT_SPINS {
        return Err(Error::Capacity(format!(
            "{n} spins exceed the exact sampler limit of {MAX_EXACT_SPINS}"
        )));
    }
    let states = 1usize << n;
    let mut energies = vec![0.0; states];
    let mut spins: Vec<Spin> = vec![-1; n];
    let mut e = c.energy(&spins);
    let mut state = 0usize;
    energies[0] = e;
    for step in 1..states {
        let k = step.trailing_zeros() as usize;
        e -= 2.0 * f64::from(spins[k]) * c.local_field(k, &spins);
        spins[k] = -spins[k];
        state ^= 1 << k;
        energies[state] = e;
    }
    // drift from incremental updates stays far below the tolerances used here,
    // but stored values are recomputed exactly when sampled
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = energies.iter().map(|&x| (min - x).exp()).collect();
    let z: f64 = weights.iter().sum();
    Ok(ExactTable {
        variables: c.variables.clone(),
        energies,
        probabilities: weights.into_iter().map(|w| w / z).collect(),
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExactSampler;

impl Sampler for ExactSampler {
    fn name(&self) -> &str {
        "exact"
    }

    fn sample(&self, p: &IsingProblem, cfg: &SamplerConfig) -> Result<SampleSet> {
        if cfg.num_reads == 0 {
            return Err(Error::Parameter("num_reads must be at least 1".into()));
        }
        let started = Instant::now();
        let table = exact_table(p)?;
        let compiled = p.compile();
        let mut cdf = Vec::with_capacity(table.probabilities.len());
        let mut acc = 0.0;
        for &q in &table.probabilities {
            acc += q;
            cdf.push(acc);
        }
        let samples = (0..cfg.num_reads)
            .into_par_iter()
            .map(|r| {
                let u: f64 = rng_for(cfg.seed, r as u64).gen::<f64>() * acc;
                let state = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                let spins = table.spins(state);
                SpinSample {
                    energy: compiled.energy(&spins),
                    spins,
                    occurrences: 1,
                }
            })
            .collect();
        Ok(SampleSet {
            variables: table.variables,
            samples,
            total_reads: cfg.num_reads,
            metadata: SampleMetadata {
                backend: self.name().into(),
                seed: cfg.seed,
                schedule: String::new(),
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimulatedAnnealing;

/// One annealing restart from a uniformly random state.
fn anneal_read<R: Rng>(c: &CompiledIsing, schedule: &[f64], rng: &mut R) -> Vec<Spin> {
    let n = c.len();
    let mut spins: Vec<Spin> = (0..n)
        .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
        .collect();
    for &beta in schedule {
        for i in 0..n {
            let delta = -2.0 * f64::from(spins[i]) * c.local_field(i, &spins);
            if delta <= 0.0 || rng.gen::<f64>() < (-beta * delta).exp() {
                spins[i] = -spins[i];
            }
        }
    }
    spins
}

impl Sampler for SimulatedAnnealing {
    fn name(&self) -> &str {
        "sa"
    }

    fn sample(&self, p: &IsingProblem, cfg: &SamplerConfig) -> Result<SampleSet> {
        cfg.check()?;
        let started = Instant::now();
        let compiled = p.compile();
        let schedule = cfg.beta_schedule();
        let samples = (0..cfg.num_reads)
            .into_par_iter()
            .map(|r| {
                let mut rng = rng_for(cfg.seed, r as u64);
                let spins = anneal_read(&compiled, &schedule, &mut rng);
                SpinSample {
                    energy: compiled.energy(&spins),
                    spins,
                    occurrences: 1,
                }
            })
            .collect();
        Ok(SampleSet {
            variables: compiled.variables,
            samples,
            total_reads: cfg.num_reads,
            metadata: SampleMetadata {
                backend: self.name().into(),
                seed: cfg.seed,
                schedule: cfg.describe_schedule(),
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub h: BTreeMap<Qubit, f64>,
    #[serde(rename = "J")]
    pub j: Vec<(Qubit, Qubit, f64)>,
    pub num_reads: usize,
    pub seed: u64,
}

impl WireRequest {
    pub fn new(p: &IsingProblem, cfg: &SamplerConfig) -> Self {
        Self {
            h: p.h.clone(),
            j: p.j.iter().map(|(&(a, b), &v)| (a, b, v)).collect(),
            num_reads: cfg.num_reads,
            seed: cfg.seed,
        }
    }

    /// The problem carried by the request. The constant offset is not transmitted.
    pub fn problem(&self) -> Result<IsingProblem> {
        let mut p = IsingProblem::new();
        p.h = self.h.clone();
        for &(a, b, v) in &self.j {
            p.add_coupling(a, b, v)?;
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRead {
    pub spins: BTreeMap<Qubit, Spin>,
    pub energy: f64,
    pub occurrences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub reads: Vec<WireRead>,
    pub backend: String,
}

impl WireResponse {
    pub fn from_sample_set(ss: &SampleSet) -> Self {
        Self {
            reads: ss
                .samples
                .iter()
                .map(|s| WireRead {
                    spins: ss
                        .variables
                        .iter()
                        .copied()
                        .zip(s.spins.iter().copied())
                        .collect(),
                    energy: s.energy,
                    occurrences: s.occurrences,
                })
                .collect(),
            backend: ss.metadata.backend.clone(),
        }
    }
}

/// Client for a sampling service speaking the JSON wire contract.
#[derive(Debug, Clone)]
pub struct RemoteSampler {
    endpoint: String,
    timeout: Duration,
}

impl RemoteSampler {
    /// `endpoint` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(300),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn url(&self) -> String {
        format!("{}/sample", self.endpoint.trim_end_matches('/'))
    }
}

impl Sampler for RemoteSampler {
    fn name(&self) -> &str {
        "remote"
    }

    fn sample(&self, p: &IsingProblem, cfg: &SamplerConfig) -> Result<SampleSet> {
        remote_sample(self, p, cfg)
    }
}

pub fn remote_sample(
    client: &RemoteSampler,
    p: &IsingProblem,
    cfg: &SamplerConfig,
) -> Result<SampleSet> {
    if cfg.num_reads == 0 {
        return Err(Error::Parameter("num_reads must be at least 1".into()));
    }
    let started = Instant::now();
    let agent = ureq::AgentBuilder::new().timeout(client.timeout).build();
    let body = serde_json::to_value(WireRequest::new(p, cfg))?;
    let response = agent
        .post(&client.url())
        .send_json(body)
        .map_err(|e| Error::Transport(e.to_string()))?;
    let mut text = String::new();
    response
        .into_reader()
        .read_to_string(&mut text)
        .map_err(|e| Error::Transport(e.to_string()))?;
    let wire: WireResponse = serde_json::from_str(&text)
        .map_err(|e| Error::RejectedResponse(format!("unparseable body: {e}")))?;
    accept_response(p, cfg, wire, started)
}

/// Converts a wire response into a sample set, enforcing the contract.
pub fn accept_response(
    p: &IsingProblem,
    cfg: &SamplerConfig,
    wire: WireResponse,
    started: Instant,
) -> Result<SampleSet> {
    let variables = p.variables();
    let mut compiled = p.compile();
    // the offset is not part of the wire format
    compiled.offset = 0.0;
    let mut samples = Vec::with_capacity(wire.reads.len());
    for (r, read) in wire.reads.into_iter().enumerate() {
        let spins = variables
            .iter()
            .map(|q| match read.spins.get(q) {
                Some(&s) if s == 1 || s == -1 => Ok(s),
                Some(&s) => Err(Error::RejectedResponse(format!(
                    "read {r}: spin {s} on qubit {q}"
                ))),
                None => Err(Error::RejectedResponse(format!(
                    "read {r}: qubit {q} missing"
                ))),
            })
            .collect::<Result<Vec<Spin>>>()?;
        let energy = compiled.energy(&spins);
        if !((energy - read.energy).abs() <= REMOTE_ENERGY_TOLERANCE) {
            return Err(Error::RejectedResponse(format!(
                "read {r}: reported energy {} but recomputed {energy}",
                read.energy
            )));
        }
        samples.push(SpinSample {
            spins,
            energy: energy + p.offset,
            occurrences: read.occurrences,
        });
    }
    let total: usize = samples.iter().map(|s| s.occurrences).sum();
    if total != cfg.num_reads {
        return Err(Error::RejectedResponse(format!(
            "{total} reads returned, {} requested",
            cfg.num_reads
        )));
    }
    Ok(SampleSet {
        variables,
        samples,
        total_reads: total,
        metadata: SampleMetadata {
            backend: wire.backend,
            seed: cfg.seed,
            schedule: String::new(),
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        },
    })
}

/// A running sampling service; stops when dropped.
pub struct SamplerServer {
    server: Arc<tiny_http::Server>,
    addr: String,
    worker: Option<JoinHandle<()>>,
}

impl SamplerServer {
    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for SamplerServer {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Serves `POST /sample` by calling `handler` on each decoded request.
pub fn serve_with<F>(addr: &str, handler: F) -> Result<SamplerServer>
where
    F: Fn(WireRequest) -> Result<WireResponse> + Send + 'static,
{
    let server =
        Arc::new(tiny_http::Server::http(addr).map_err(|e| Error::Transport(e.to_string()))?);
    let bound = server
        .server_addr()
        .to_ip()
        .map(|a| a.to_string())
        .ok_or_else(|| Error::Transport("server bound to a non-IP address".into()))?;
    let worker_server = Arc::clone(&server);
    let worker = std::thread::spawn(move || {
        for mut request in worker_server.incoming_requests() {
            let reply = if request.method() != &tiny_http::Method::Post
                || request.url() != "/sample"
            {
                (404, r#"{"error":"not found"}"#.to_string())
            } else {
                let mut body = String::new();
                let parsed = request
                    .as_reader()
                    .read_to_string(&mut body)
                    .map_err(Error::from)
                    .and_then(|_| serde_json::from_str::<WireRequest>(&body).map_err(Error::from));
                match parsed.and_then(&handler) {
                    Ok(resp) => match serde_json::to_string(&resp) {
                        Ok(s) => (200, s),
                        Err(e) => (
                            500,
                            serde_json::json!({ "error": e.to_string() }).to_string(),
                        ),
                    },
                    Err(e) => (
                        400,
                        serde_json::json!({ "error": e.to_string() }).to_string(),
                    ),
                }
            };
            let header =
                tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
                    .expect("static header");
            let response = tiny_http::Response::from_string(reply.1)
                .with_status_code(reply.0)
                .with_header(header);
            let _ = request.respond(response);
        }
    });
    Ok(SamplerServer {
        server,
        addr: bound,
        worker: Some(worker),
    })
}

/// Serves a local sampler over the wire contract. Requests override
/// `num_reads` and `seed` of `base`.
pub fn serve_sampler(
    addr: &str,
    sampler: Arc<dyn Sampler>,
    base: SamplerConfig,
) -> Result<SamplerServer> {
    serve_with(addr, move |req| {
        let cfg = SamplerConfig {
            num_reads: req.num_reads,
            seed: req.seed,
            ..base
        };
        let ss = sampler.sample(&req.problem()?, &cfg)?;
        Ok(WireResponse::from_sample_set(&ss))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(h: f64) -> IsingProblem {
        let mut p = IsingProblem::new();
        p.h.insert(0, h);
        p
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig::default().check().is_ok());
        let bad = SamplerConfig {
            beta_min: 3.0,
            beta_max: 1.0,
            ..Default::default()
        };
        assert!(bad.check().is_err());
        assert!(SamplerConfig {
            num_reads: 0,
            ..Default::default()
        }
        .check()
        .is_err());
        assert!(SamplerConfig {
            sweeps: 0,
            ..Default::default()
        }
        .check()
        .is_err());
    }

    #[test]
    fn schedule_endpoints() {
        let cfg = SamplerConfig {
            sweeps: 5,
            beta_min: 0.5,
            beta_max: 8.0,
            ..Default::default()
        };
        let s = cfg.beta_schedule();
        assert_eq!(s.len(), 5);
        assert!((s[0] - 0.5).abs() < 1e-12 && (s[4] - 8.0).abs() < 1e-12);
        assert!((s[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn exact_uniform_and_single_spin() {
        let mut p = IsingProblem::new();
        p.h.insert(0, 0.0);
        p.h.insert(1, 0.0);
        let t = exact_table(&p).unwrap();
        assert!(t.probabilities.iter().all(|&q| (q - 0.25).abs() < 1e-15));

        let t = exact_table(&single(-2.0)).unwrap();
        let plus = t.probabilities[t.state_of(&[1])];
        let closed = 2f64.exp() / (2f64.exp() + (-2f64).exp());
        assert!((plus - closed).abs() < 1e-12);
        assert!((closed - 0.9820137900379085).abs() < 1e-15);
    }

    #[test]
    fn exact_capacity() {
        let mut p = IsingProblem::new();
        for q in 0..23 {
            p.h.insert(q, 0.1);
        }
        assert!(matches!(exact_table(&p), Err(Error::Capacity(_))));
    }

    #[test]
    fn sa_single_spin_and_ferromagnet() {
        let cfg = SamplerConfig {
            num_reads: 200,
            seed: 4,
            sweeps: 100,
            ..Default::default()
        };
        let ss = SimulatedAnnealing.sample(&single(-2.0), &cfg).unwrap();
        let plus = ss.samples.iter().filter(|s| s.spins[0] == 1).count();
        assert!(plus as f64 >= 0.99 * 200.0);

        let mut fm = IsingProblem::new();
        fm.add_coupling(0, 1, -1.0).unwrap();
        let cold = SamplerConfig {
            beta_max: 20.0,
            ..cfg
        };
        let ss = SimulatedAnnealing.sample(&fm, &cold).unwrap();
        ss.verify(&fm, 1e-9).unwrap();
        for s in &ss.samples {
            assert_eq!(s.spins[0], s.spins[1]);
            assert_eq!(s.energy, -1.0);
        }
    }
}
