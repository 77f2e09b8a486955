//! Spin Hamiltonians and the hand-off between RBM parameters and an
//! embedded Ising problem.
//!
//! Convention throughout: `E(s) = Σ h_i s_i + Σ_{i<j} J_ij s_i s_j + offset`
//! with `s_i ∈ {−1, +1}`, so negative couplings are ferromagnetic.
//! Binary and spin variables are related by `v = (s + 1) / 2`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::RbmEmbedding;
use crate::error::{Error, Result};
use crate::rbm::{BinaryMatrix, RbmParams};
use crate::seed::rng_for;

pub type Qubit = u32;
pub type Spin = i8;

/// Tolerance used when checking stored sample energies.
pub const ENERGY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IsingProblem {
    pub h: BTreeMap<Qubit, f64>,
    /// Keys are ordered pairs `(a, b)` with `a < b`.
    pub j: BTreeMap<(Qubit, Qubit), f64>,
    pub offset: f64,
}

impl IsingProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_bias(&mut self, q: Qubit, value: f64) {
        *self.h.entry(q).or_insert(0.0) += value;
    }

    /// Adds `value` to the coupling between `a` and `b` (in either order).
    pub fn add_coupling(&mut self, a: Qubit, b: Qubit, value: f64) -> Result<()> {
        if a == b {
            return Err(Error::Domain(format!("self-coupling on qubit {a}")));
        }
        *self.j.entry((a.min(b), a.max(b))).or_insert(0.0) += value;
        Ok(())
    }

    pub fn coupling(&self, a: Qubit, b: Qubit) -> f64 {
        self.j.get(&(a.min(b), a.max(b))).copied().unwrap_or(0.0)
    }

    /// Every qubit with a bias or a coupling, ascending.
    pub fn variables(&self) -> Vec<Qubit> {
        let mut set: BTreeSet<Qubit> = self.h.keys().copied().collect();
        for &(a, b) in self.j.keys() {
            set.insert(a);
            set.insert(b);
        }
        set.into_iter().collect()
    }

    pub fn num_variables(&self) -> usize {
        self.variables().len()
    }

    /// Dense form over [`variables`](Self::variables) for samplers.
    pub fn compile(&self) -> CompiledIsing {
        let vars = self.variables();
        let index: BTreeMap<Qubit, usize> = vars.iter().enumerate().map(|(i, &q)| (q, i)).collect();
        let mut h = vec![0.0; vars.len()];
        for (q, &v) in &self.h {
            h[index[q]] = v;
        }
        let mut neighbors = vec![Vec::new(); vars.len()];
        for (&(a, b), &v) in &self.j {
            let (ia, ib) = (index[&a], index[&b]);
            neighbors[ia].push((ib, v));
            neighbors[ib].push((ia, v));
        }
        CompiledIsing {
            variables: vars,
            h,
            neighbors,
            offset: self.offset,
        }
    }
}

/// Index-addressed copy of an [`IsingProblem`].
#[derive(Debug, Clone)]
pub struct CompiledIsing {
    pub variables: Vec<Qubit>,
    pub h: Vec<f64>,
    pub neighbors: Vec<Vec<(usize, f64)>>,
    pub offset: f64,
}

impl CompiledIsing {
    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    /// `h_i + Σ_j J_ij s_j`; flipping spin `i` changes the energy by `−2 s_i` times this.
    pub fn local_field(&self, i: usize, spins: &[Spin]) -> f64 {
        self.h[i]
            + self.neighbors[i]
                .iter()
                .map(|&(j, v)| v * f64::from(spins[j]))
                .sum::<f64>()
    }

    pub fn energy(&self, spins: &[Spin]) -> f64 {
        let mut e = self.offset;
        for (i, &s) in spins.iter().enumerate() {
            let s = f64::from(s);
            e += self.h[i] * s;
            for &(j, v) in &self.neighbors[i] {
                if j > i {
                    e += v * s * f64::from(spins[j]);
                }
            }
        }
        e
    }
}

fn check_spin(q: Qubit, s: Spin) -> Result<()> {
    if s == 1 || s == -1 {
        Ok(())
    } else {
        Err(Error::Domain(format!("spin {s} on qubit {q} is not ±1")))
    }
}

/// `E(s)` for an assignment covering every qubit of `p`.
pub fn ising_energy(p: &IsingProblem, s: &BTreeMap<Qubit, Spin>) -> Result<f64> {
    let spin = |q: Qubit| -> Result<f64> {
        let v = *s.get(&q).ok_or(Error::IncompleteAssignment(q))?;
        check_spin(q, v)?;
        Ok(f64::from(v))
    };
    let mut e = p.offset;
    for (&q, &b) in &p.h {
        e += b * spin(q)?;
    }
    for (&(a, b), &v) in &p.j {
        e += v * spin(a)? * spin(b)?;
    }
    Ok(e)
}

pub fn spin_to_binary(s: Spin) -> Result<u8> {
    match s {
        1 => Ok(1),
        -1 => Ok(0),
        _ => Err(Error::Domain(format!("spin {s} is not ±1"))),
    }
}

pub fn binary_to_spin(v: u8) -> Result<Spin> {
    match v {
        1 => Ok(1),
        0 => Ok(-1),
        _ => Err(Error::Domain(format!("bit {v} is not 0/1"))),
    }
}

pub fn spins_to_binary(s: &[Spin]) -> Result<Vec<u8>> {
    s.iter().map(|&x| spin_to_binary(x)).collect()
}

pub fn binary_to_spins(v: &[u8]) -> Result<Vec<Spin>> {
    v.iter().map(|&x| binary_to_spin(x)).collect()
}

/// Logical (unembedded) Ising form of an RBM: visible unit `i` is variable
/// `i`, hidden unit `j` is variable `n_visible + j`.
///
/// `h_i = −(b_i/2 + Σ_j W_ij/4)`, `h_j = −(c_j/2 + Σ_i W_ij/4)`, `J_ij = −W_ij/4`;
/// the offset makes `E_ising(s) = E_rbm(v, h)` exactly.
pub fn rbm_to_logical_ising(params: &RbmParams) -> Result<IsingProblem> {
    params.check()?;
    let (nv, nh) = (params.n_visible(), params.n_hidden());
    let mut p = IsingProblem::new();
    let (hv, hh, couplings, offset) = logical_terms(params);
    for i in 0..nv {
        p.h.insert(i as Qubit, hv[i]);
    }
    for j in 0..nh {
        p.h.insert((nv + j) as Qubit, hh[j]);
    }
    for (i, j, v) in couplings {
        p.add_coupling(i as Qubit, (nv + j) as Qubit, v)?;
    }
    p.offset = offset;
    Ok(p)
}

type LogicalTerms = (Vec<f64>, Vec<f64>, Vec<(usize, usize, f64)>, f64);

fn logical_terms(params: &RbmParams) -> LogicalTerms {
    let w = &params.weights;
    let (nv, nh) = (params.n_visible(), params.n_hidden());
    let hv: Vec<f64> = (0..nv)
        .map(|i| -(params.visible_bias[i] / 2.0 + w.row(i).sum() / 4.0))
        .collect();
    let hh: Vec<f64> = (0..nh)
        .map(|j| -(params.hidden_bias[j] / 2.0 + w.column(j).sum() / 4.0))
        .collect();
    let mut couplings = Vec::with_capacity(nv * nh);
    for i in 0..nv {
        for j in 0..nh {
            couplings.push((i, j, -w[[i, j]] / 4.0));
        }
    }
    let offset = -params.visible_bias.sum() / 2.0 - params.hidden_bias.sum() / 2.0 - w.sum() / 4.0;
    (hv, hh, couplings, offset)
}

/// Places the logical Ising form of `params` onto the embedding.
///
/// Each logical bias is split equally across the qubits of its chain, each
/// logical coupling sits on the pair's unique inter-layer coupler and every
/// chain coupler gets `−chain_strength`. All terms are then scaled by
/// `beta_eff`. The offset is chosen so that for states with unbroken chains
/// the energy equals `beta_eff · E_rbm(v, h)`.
pub fn rbm_to_ising(
    params: &RbmParams,
    emb: &RbmEmbedding,
    chain_strength: f64,
    beta_eff: f64,
) -> Result<IsingProblem> {
    if !(chain_strength > 0.0 && chain_strength.is_finite()) {
        return Err(Error::Parameter(format!(
            "chain_strength {chain_strength} must be positive"
        )));
    }
    if !(beta_eff > 0.0 && beta_eff.is_finite()) {
        return Err(Error::Parameter(format!(
            "beta_eff {beta_eff} must be positive"
        )));
    }
    params.check()?;
    if params.n_visible() != emb.n_visible() || params.n_hidden() != emb.n_hidden() {
        return Err(Error::Dimension(format!(
            "RBM is {}x{}, embedding is {}x{}",
            params.n_visible(),
            params.n_hidden(),
            emb.n_visible(),
            emb.n_hidden()
        )));
    }
    let (hv, hh, couplings, offset) = logical_terms(params);
    let mut p = IsingProblem::new();
    for (i, &bias) in hv.iter().enumerate() {
        let chain = emb.visible_chain(i);
        let share = bias / chain.len() as f64;
        for q in chain {
            p.add_bias(q as Qubit, beta_eff * share);
        }
    }
    for (j, &bias) in hh.iter().enumerate() {
        let chain = emb.hidden_chain(j);
        let share = bias / chain.len() as f64;
        for q in chain {
            p.add_bias(q as Qubit, beta_eff * share);
        }
    }
    for (i, j, v) in couplings {
        let (a, b) = emb.interlayer(i, j);
        p.add_coupling(a as Qubit, b as Qubit, beta_eff * v)?;
    }
    for &(a, b) in &emb.chain_couplings {
        p.add_coupling(a as Qubit, b as Qubit, -beta_eff * chain_strength)?;
    }
    p.offset = beta_eff * (offset + chain_strength * emb.chain_couplings.len() as f64);
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinSample {
    /// Spins in the order of [`SampleSet::variables`].
    pub spins: Vec<Spin>,
    pub energy: f64,
    pub occurrences: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMetadata {
    pub backend: String,
    pub seed: u64,
    /// Human-readable schedule description; empty for non-annealing backends.
    pub schedule: String,
    pub wall_ms: f64,
}

/// Reads of one sampling job.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub variables: Vec<Qubit>,
    pub samples: Vec<SpinSample>,
    pub total_reads: usize,
    pub metadata: SampleMetadata,
}

impl SampleSet {
    /// Checks occurrence totals, spin domain and stored energies against `p`.
    pub fn verify(&self, p: &IsingProblem, tolerance: f64) -> Result<()> {
        let occurrences: usize = self.samples.iter().map(|s| s.occurrences).sum();
        if occurrences != self.total_reads {
            return Err(Error::Validation(format!(
                "occurrences sum to {occurrences}, total_reads is {}",
                self.total_reads
            )));
        }
        let compiled = p.compile();
        let position: BTreeMap<Qubit, usize> = self
            .variables
            .iter()
            .enumerate()
            .map(|(i, &q)| (q, i))
            .collect();
        let mut map = Vec::with_capacity(compiled.len());
        for &q in &compiled.variables {
            map.push(*position.get(&q).ok_or(Error::IncompleteAssignment(q))?);
        }
        let mut dense = vec![0 as Spin; compiled.len()];
        for (r, s) in self.samples.iter().enumerate() {
            if s.spins.len() != self.variables.len() {
                return Err(Error::Validation(format!(
                    "read {r} has {} spins",
                    s.spins.len()
                )));
            }
            for (k, &src) in map.iter().enumerate() {
                check_spin(compiled.variables[k], s.spins[src])?;
                dense[k] = s.spins[src];
            }
            let e = compiled.energy(&dense);
            if (e - s.energy).abs() > tolerance {
                return Err(Error::Validation(format!(
                    "read {r}: stored energy {} but recomputed {e}",
                    s.energy
                )));
            }
        }
        Ok(())
    }

    /// Spin of qubit `q` in sample `r`.
    pub fn spin(&self, r: usize, q: Qubit) -> Option<Spin> {
        let pos = self.variables.binary_search(&q).ok()?;
        self.samples.get(r).map(|s| s.spins[pos])
    }

    /// CSV with one row per sample: a `q<index>` column per qubit, then `energy`, `occurrences`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = self.variables.iter().map(|q| format!("q{q}")).collect();
        header.push("energy".into());
        header.push("occurrences".into());
        w.write_record(&header)?;
        for s in &self.samples {
            let mut record: Vec<String> = s.spins.iter().map(|x| x.to_string()).collect();
            record.push(format!("{:?}", s.energy));
            record.push(s.occurrences.to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, metadata: SampleMetadata) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let n = header.len();
        if n < 2 || &header[n - 2] != "energy" || &header[n - 1] != "occurrences" {
            return Err(Error::Malformed(
                "sample CSV must end with energy,occurrences".into(),
            ));
        }
        let variables = header
            .iter()
            .take(n - 2)
            .map(|h| {
                h.strip_prefix('q')
                    .and_then(|x| x.parse::<Qubit>().ok())
                    .ok_or_else(|| Error::Malformed(format!("bad qubit column {h:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut samples = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let cell = |c: usize| -> Result<&str> {
                rec.get(c).ok_or_else(|| Error::Cell {
                    row,
                    column: header[c.min(n - 1)].to_string(),
                    message: "missing".into(),
                })
            };
            let parse_err = |c: usize, m: String| Error::Cell {
                row,
                column: header[c].to_string(),
                message: m,
            };
            let mut spins = Vec::with_capacity(n - 2);
            for c in 0..n - 2 {
                let s: Spin = cell(c)?
                    .trim()
                    .parse()
                    .map_err(|e| parse_err(c, format!("{e}")))?;
                spins.push(s);
            }
            let energy: f64 = cell(n - 2)?
                .trim()
                .parse()
                .map_err(|e| parse_err(n - 2, format!("{e}")))?;
            let occurrences: usize = cell(n - 1)?
                .trim()
                .parse()
                .map_err(|e| parse_err(n - 1, format!("{e}")))?;
            samples.push(SpinSample {
                spins,
                energy,
                occurrences,
            });
        }
        let total_reads = samples.iter().map(|s| s.occurrences).sum();
        Ok(Self {
            variables,
            samples,
            total_reads,
            metadata,
        })
    }
}

/// Logical states recovered from a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedSamples {
    pub visible: BinaryMatrix,
    pub hidden: BinaryMatrix,
    /// Fraction of (read, chain) pairs whose spins disagree.
    pub chain_break_rate: f64,
}

/// Majority vote per chain; ties are broken by a coin drawn from stream
/// `row` of `seed`, where `row` is the expanded read index.
pub fn decode_samples(ss: &SampleSet, emb: &RbmEmbedding, seed: u64) -> Result<DecodedSamples> {
    let position: BTreeMap<Qubit, usize> = ss
        .variables
        .iter()
        .enumerate()
        .map(|(i, &q)| (q, i))
        .collect();
    let lookup = |chain: std::ops::Range<usize>| -> Result<Vec<usize>> {
        chain
            .map(|q| {
                position
                    .get(&(q as Qubit))
                    .copied()
                    .ok_or(Error::IncompleteAssignment(q as Qubit))
            })
            .collect()
    };
    let visible_chains: Vec<Vec<usize>> = (0..emb.n_visible())
        .map(|i| lookup(emb.visible_chain(i)))
        .collect::<Result<_>>()?;
    let hidden_chains: Vec<Vec<usize>> = (0..emb.n_hidden())
        .map(|j| lookup(emb.hidden_chain(j)))
        .collect::<Result<_>>()?;

    let (nv, nh) = (emb.n_visible(), emb.n_hidden());
    let rows = ss.total_reads;
    let mut v = Vec::with_capacity(rows * nv);
    let mut h = Vec::with_capacity(rows * nh);
    let mut broken = 0usize;
    let mut row = 0u64;
    for s in &ss.samples {
        if s.spins.len() != ss.variables.len() {
            return Err(Error::Validation(format!(
                "read has {} spins",
                s.spins.len()
            )));
        }
        for _ in 0..s.occurrences {
            let mut rng = rng_for(seed, row);
            for (chains, out) in [(&visible_chains, &mut v), (&hidden_chains, &mut h)] {
                for chain in chains {
                    let mut sum = 0i64;
                    for &k in chain {
                        check_spin(ss.variables[k], s.spins[k])?;
                        sum += i64::from(s.spins[k]);
                    }
                    if sum.unsigned_abs() as usize != chain.len() {
                        broken += 1;
                    }
                    let bit = match sum.signum() {
                        1 => 1,
                        -1 => 0,
                        _ => u8::from(rng.gen::<bool>()),
                    };
                    out.push(bit);
                }
            }
            row += 1;
        }
    }
    let visible = BinaryMatrix::new(
        ndarray::Array2::from_shape_vec((rows, nv), v)
            .map_err(|e| Error::Dimension(e.to_string()))?,
    )?;
    let hidden = BinaryMatrix::new(
        ndarray::Array2::from_shape_vec((rows, nh), h)
            .map_err(|e| Error::Dimension(e.to_string()))?,
    )?;
    let pairs = rows * (nv + nh);
    Ok(DecodedSamples {
        visible,
        hidden,
        chain_break_rate: if pairs == 0 {
            0.0
        } else {
            broken as f64 / pairs as f64
        },
    })
}
