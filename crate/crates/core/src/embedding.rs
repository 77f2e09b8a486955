//! Parametric placement of a bipartite `n_visible × n_hidden` RBM onto
//! Pegasus as qubit chains.
//!
//! Chains are runs of consecutive linear indices. Visible unit
//! `ℓ = z·n_periodicity + x` starts at `startv + n_periodicity·x + z·periodicity_v`
//! and spans `n_hidden / n_periodicity` qubits; hidden units mirror this with
//! `starto` and `periodicity_h`. The `x`-th qubit of visible chain `(y, t)` is
//! coupled to the `y`-th qubit of hidden chain `(x, k)`, giving exactly one
//! physical coupler per logical (visible, hidden) pair.
//!
//! The generator transcribes the placement rule only. Whether the emitted
//! pairs are real couplers is decided by [`validate_embedding`].

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pegasus::PegasusGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmbeddingParams {
    pub n_visible: usize,
    pub n_hidden: usize,
    pub periodicity_v: usize,
    pub periodicity_h: usize,
    pub n_periodicity: usize,
    pub startv: usize,
    pub starto: usize,
}

impl EmbeddingParams {
    pub fn check(&self) -> Result<()> {
        if self.n_periodicity == 0 {
            return Err(Error::Parameter("n_periodicity must be positive".into()));
        }
        if self.n_visible == 0 || self.n_hidden == 0 {
            return Err(Error::Parameter("layer sizes must be positive".into()));
        }
        if self.n_visible % self.n_periodicity != 0 || self.n_hidden % self.n_periodicity != 0 {
            return Err(Error::Parameter(format!(
                "n_periodicity {} must divide n_visible {} and n_hidden {}",
                self.n_periodicity, self.n_visible, self.n_hidden
            )));
        }
        Ok(())
    }

    /// Number of visible chain rows, `H_V`; also the hidden chain length.
    pub fn visible_rows(&self) -> usize {
        self.n_visible / self.n_periodicity
    }

    /// Number of hidden chain rows, `H_H`; also the visible chain length.
    pub fn hidden_rows(&self) -> usize {
        self.n_hidden / self.n_periodicity
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RbmEmbedding {
    pub params: Option<EmbeddingParams>,
    pub visible_nodes: Vec<usize>,
    pub hidden_nodes: Vec<usize>,
    pub chain_couplings: Vec<(usize, usize)>,
    pub interlayer_couplings: Vec<(usize, usize)>,
}

impl RbmEmbedding {
    pub fn n_visible(&self) -> usize {
        self.visible_nodes.len()
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden_nodes.len()
    }

    pub fn visible_chain_len(&self) -> usize {
        self.params.map_or(0, |p| p.hidden_rows())
    }

    pub fn hidden_chain_len(&self) -> usize {
        self.params.map_or(0, |p| p.visible_rows())
    }

    pub fn visible_chain(&self, i: usize) -> Range<usize> {
        let s = self.visible_nodes[i];
        s..s + self.visible_chain_len()
    }

    pub fn hidden_chain(&self, j: usize) -> Range<usize> {
        let s = self.hidden_nodes[j];
        s..s + self.hidden_chain_len()
    }

    /// All chains, visible first, in logical order.
    pub fn chains(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.n_visible())
            .map(|i| self.visible_chain(i))
            .chain((0..self.n_hidden()).map(|j| self.hidden_chain(j)))
    }

    /// Position in `interlayer_couplings` of the coupler realising logical pair `(i, j)`.
    pub fn interlayer_index(&self, i: usize, j: usize) -> usize {
        let p = self.params.expect("interlayer_index on an empty embedding");
        let np = p.n_periodicity;
        let (y, t) = (i / np, i % np);
        let (x, k) = (j / np, j % np);
        ((x * p.visible_rows() + y) * np + t) * np + k
    }

    pub fn interlayer(&self, i: usize, j: usize) -> (usize, usize) {
        self.interlayer_couplings[self.interlayer_index(i, j)]
    }

    /// Sparse coupling matrix with −1 on every chain coupler.
    pub fn coupling_matrix(&self) -> BTreeMap<(usize, usize), f64> {
        self.chain_couplings
            .iter()
            .map(|&(a, b)| ((a.min(b), a.max(b)), -1.0))
            .collect()
    }

    /// Distinct physical qubits, ascending.
    pub fn qubits(&self) -> BTreeSet<usize> {
        self.chains().flatten().collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Runs the placement rule for `params` against a graph with `num_qubits` qubits.
pub fn generate_embedding(params: &EmbeddingParams, num_qubits: usize) -> Result<RbmEmbedding> {
    params.check()?;
    let np = params.n_periodicity;
    let hv = params.visible_rows();
    let hh = params.hidden_rows();
    let overflow = |index: usize| -> Result<usize> {
        if index < num_qubits {
            Ok(index)
        } else {
            Err(Error::EmbeddingOverflow { index, num_qubits })
        }
    };

    let mut visible_nodes = Vec::with_capacity(params.n_visible);
    let mut hidden_nodes = Vec::with_capacity(params.n_hidden);
    let mut chain_couplings =
        Vec::with_capacity(params.n_visible * (hh - 1) + params.n_hidden * (hv - 1));

    for z in 0..hv {
        for x in 0..np {
            let n = params.startv + np * x + z * params.periodicity_v;
            overflow(n + hh - 1)?;
            visible_nodes.push(n);
            chain_couplings.extend((0..hh - 1).map(|j| (n + j, n + j + 1)));
        }
    }
    for z in 0..hh {
        for x in 0..np {
            let p = params.starto + np * x + z * params.periodicity_h;
            overflow(p + hv - 1)?;
            hidden_nodes.push(p);
            chain_couplings.extend((0..hv - 1).map(|j| (p + j, p + j + 1)));
        }
    }

    let mut interlayer_couplings = Vec::with_capacity(params.n_visible * params.n_hidden);
    for x in 0..hh {
        for y in 0..hv {
            for t in 0..np {
                let n = params.startv + np * t + y * params.periodicity_v + x;
                for k in 0..np {
                    let p = params.starto + np * k + x * params.periodicity_h + y;
                    interlayer_couplings.push((n, p));
                }
            }
        }
    }

    Ok(RbmEmbedding {
        params: Some(*params),
        visible_nodes,
        hidden_nodes,
        chain_couplings,
        interlayer_couplings,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Emitted pairs that are not couplers of the graph.
    pub missing_couplers: Vec<(usize, usize)>,
    /// Qubits claimed by more than one chain.
    pub overlapping_qubits: Vec<usize>,
    /// Chain qubits on the defect list.
    pub defective_qubits: Vec<usize>,
    /// Logical pairs whose coupler does not touch both chains.
    pub misrouted_pairs: Vec<(usize, usize)>,
    /// Structural inconsistencies (wrong list lengths and similar).
    pub structure: Vec<String>,
    pub visible_chain_lengths: BTreeMap<usize, usize>,
    pub hidden_chain_lengths: BTreeMap<usize, usize>,
    pub valid: bool,
}

impl ValidationReport {
    pub fn violations(&self) -> usize {
        self.missing_couplers.len()
            + self.overlapping_qubits.len()
            + self.defective_qubits.len()
            + self.misrouted_pairs.len()
            + self.structure.len()
    }
}

/// Checks every emitted pair against the graph and every chain for overlap.
///
/// Indices outside the graph are a hard error, not a violation.
pub fn validate_embedding(g: &PegasusGraph, emb: &RbmEmbedding) -> Result<ValidationReport> {
    validate_with_defects(g, emb, &[])
}

pub fn validate_with_defects(
    g: &PegasusGraph,
    emb: &RbmEmbedding,
    defects: &[usize],
) -> Result<ValidationReport> {
    let n = g.num_qubits();
    let in_range = |q: usize| {
        if q < n {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: q, limit: n })
        }
    };
    let mut report = ValidationReport::default();

    if let Some(p) = emb.params {
        if emb.n_visible() != p.n_visible || emb.n_hidden() != p.n_hidden {
            report.structure.push(format!(
                "node lists {}x{} disagree with params {}x{}",
                emb.n_visible(),
                emb.n_hidden(),
                p.n_visible,
                p.n_hidden
            ));
        }
        let expected = p.n_visible * p.n_hidden;
        if emb.interlayer_couplings.len() != expected {
            report.structure.push(format!(
                "{} inter-layer couplers, expected {expected}",
                emb.interlayer_couplings.len()
            ));
        }
    } else if !(emb.visible_nodes.is_empty() && emb.hidden_nodes.is_empty()) {
        report
            .structure
            .push("node lists present without params".into());
    }

    let mut owner: Vec<u32> = vec![0; n];
    for chain in emb.chains() {
        for q in chain {
            in_range(q)?;
            owner[q] += 1;
        }
    }
    report.overlapping_qubits = (0..n).filter(|&q| owner[q] > 1).collect();
    let defect_set: BTreeSet<usize> = defects.iter().copied().collect();
    report.defective_qubits = (0..n)
        .filter(|q| owner[*q] > 0 && defect_set.contains(q))
        .collect();

    for &(a, b) in emb.chain_couplings.iter().chain(&emb.interlayer_couplings) {
        in_range(a)?;
        in_range(b)?;
        if !g.is_edge(a, b)? {
            report.missing_couplers.push((a, b));
        }
    }

    if report.structure.is_empty() && emb.params.is_some() {
        for i in 0..emb.n_visible() {
            let vc = emb.visible_chain(i);
            for j in 0..emb.n_hidden() {
                let (a, b) = emb.interlayer(i, j);
                if !(vc.contains(&a) && emb.hidden_chain(j).contains(&b)) {
                    report.misrouted_pairs.push((i, j));
                }
            }
        }
    }

    for _ in 0..emb.n_visible() {
        *report
            .visible_chain_lengths
            .entry(emb.visible_chain_len())
            .or_default() += 1;
    }
    for _ in 0..emb.n_hidden() {
        *report
            .hidden_chain_lengths
            .entry(emb.hidden_chain_len())
            .or_default() += 1;
    }
    report.valid = report.violations() == 0;
    Ok(report)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingStats {
    pub qubits_used: usize,
    pub max_chain_length: usize,
    pub chains: usize,
}

pub fn embedding_stats(emb: &RbmEmbedding) -> EmbeddingStats {
    let max_chain_length = emb.chains().map(|c| c.len()).max().unwrap_or(0);
    EmbeddingStats {
        qubits_used: emb.qubits().len(),
        max_chain_length,
        chains: emb.n_visible() + emb.n_hidden(),
    }
}

/// Chains strictly longer than `t`.
pub fn chains_longer_than(emb: &RbmEmbedding, t: usize) -> usize {
    emb.chains().filter(|c| c.len() > t).count()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicityStats {
    pub n_periodicity: usize,
    /// Why the candidate was skipped without search, if it was.
    pub skipped: Option<String>,
    pub visible_starts_scanned: usize,
    /// Full tuples evaluated; on success, only those at the winning start.
    pub tuples_checked: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub search_order: String,
    pub per_periodicity: Vec<PeriodicityStats>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calibration {
    pub params: EmbeddingParams,
    pub report: CalibrationReport,
}

const SEARCH_ORDER: &str = "lexicographic over (n_periodicity ascending, startv in [0, N), \
starto ascending, periodicity_v ascending, periodicity_h ascending); starto is drawn from the \
neighbours of startv, periodicity_v from the neighbours of starto+1 minus startv and \
periodicity_h from the neighbours of startv+1 minus starto (0 when the layer has a single row); \
tuples outside these sets cannot satisfy the first coupler they emit; first valid tuple wins";

/// Deterministic search for parameters whose embedding is valid on `g`
/// and avoids every qubit in `defects`.
///
/// Candidates not dividing both layer sizes are skipped, as are candidates
/// where chains of one row would overlap (`n_periodicity > 1` and chain
/// length above `n_periodicity`).
pub fn calibrate_params(
    g: &PegasusGraph,
    n_visible: usize,
    n_hidden: usize,
    n_periodicity_candidates: &[usize],
    defects: &[usize],
) -> Result<Calibration> {
    let n = g.num_qubits();
    let mut dead = vec![false; n];
    for &q in defects {
        if q < n {
            dead[q] = true;
        }
    }
    // run[q]: length of the longest coupled, defect-free run of consecutive indices from q
    let mut run = vec![0usize; n + 1];
    for q in (0..n).rev() {
        if !dead[q] {
            run[q] = 1 + if q + 1 < n && g.has_edge(q, q + 1) {
                run[q + 1]
            } else {
                0
            };
        }
    }

    let mut candidates: Vec<usize> = n_periodicity_candidates.to_vec();
    candidates.sort_unstable();
    candidates.dedup();

    let mut report = CalibrationReport {
        search_order: SEARCH_ORDER.into(),
        per_periodicity: Vec::new(),
    };
    for np in candidates {
        let mut stats = PeriodicityStats {
            n_periodicity: np,
            ..Default::default()
        };
        if np == 0 || n_visible == 0 || n_hidden == 0 || n_visible % np != 0 || n_hidden % np != 0 {
            stats.skipped = Some("does not divide both layer sizes".into());
            report.per_periodicity.push(stats);
            continue;
        }
        let hv = n_visible / np;
        let hh = n_hidden / np;
        if n_visible * hh + n_hidden * hv > n {
            stats.skipped = Some(format!("needs {} qubits", n_visible * hh + n_hidden * hv));
            report.per_periodicity.push(stats);
            continue;
        }
        if np > 1 && (hh > np || hv > np) {
            stats.skipped = Some(format!(
                "chains of length {} or {} overlap at stride {np}",
                hh, hv
            ));
            report.per_periodicity.push(stats);
            continue;
        }

        let search = Search {
            g,
            run: &run,
            n_visible,
            n_hidden,
            np,
            hv,
            hh,
        };
        let found = (0..n)
            .into_par_iter()
            .map(|startv| search.from_visible_start(startv))
            .find_first(|(hit, _)| hit.is_some());
        let checked: usize;
        let hit = match found {
            Some((hit, c)) => {
                checked = c;
                hit
            }
            None => {
                checked = (0..n).map(|s| search.from_visible_start(s).1).sum();
                None
            }
        };
        stats.visible_starts_scanned = hit.map_or(n, |p| p.startv + 1);
        stats.tuples_checked = checked;
        report.per_periodicity.push(stats);

        if let Some(params) = hit {
            let emb = generate_embedding(&params, n)?;
            let check = validate_with_defects(g, &emb, defects)?;
            debug_assert!(check.valid);
            if check.valid {
                return Ok(Calibration { params, report });
            }
        }
    }
    let summary: Vec<String> = report
        .per_periodicity
        .iter()
        .map(|s| match &s.skipped {
            Some(why) => format!("n_periodicity={}: skipped ({why})", s.n_periodicity),
            None => format!(
                "n_periodicity={}: {} starts, {} tuples checked",
                s.n_periodicity, s.visible_starts_scanned, s.tuples_checked
            ),
        })
        .collect();
    Err(Error::NoValidEmbedding(format!(
        "{n_visible}x{n_hidden} on P{}: {}",
        g.m(),
        if summary.is_empty() {
            "no candidates".to_string()
        } else {
            summary.join("; ")
        }
    )))
}

/// Default periodicity candidates: every common divisor of both layer sizes.
pub fn default_periodicity_candidates(n_visible: usize, n_hidden: usize) -> Vec<usize> {
    (1..=n_visible.min(n_hidden))
        .filter(|d| n_visible % d == 0 && n_hidden % d == 0)
        .collect()
}

struct Search<'a> {
    g: &'a PegasusGraph,
    run: &'a [usize],
    n_visible: usize,
    n_hidden: usize,
    np: usize,
    hv: usize,
    hh: usize,
}

impl Search<'_> {
    fn edge(&self, a: usize, b: usize) -> bool {
        self.g.has_edge(a, b)
    }

    fn chain_ok(&self, start: usize, len: usize) -> bool {
        start < self.g.num_qubits() && self.run[start] >= len
    }

    /// First valid tuple with this visible start, plus the number of full tuples tried.
    fn from_visible_start(&self, startv: usize) -> (Option<EmbeddingParams>, usize) {
        let (np, hv, hh) = (self.np, self.hv, self.hh);
        let mut checked = 0;
        if !(0..np).all(|t| self.chain_ok(startv + np * t, hh)) {
            return (None, 0);
        }
        let Ok(first) = self.g.neighbors(startv) else {
            return (None, 0);
        };
        for &starto in first {
            let starto = starto as usize;
            let block_ok = (0..np).all(|k| self.chain_ok(starto + np * k, hv))
                && (0..np).all(|t| (0..np).all(|k| self.edge(startv + np * t, starto + np * k)));
            if !block_ok {
                continue;
            }
            let pvs = self.stride_candidates(hv, starto + 1, startv);
            let phs = self.stride_candidates(hh, startv + 1, starto);
            for &pv in &pvs {
                for &ph in &phs {
                    checked += 1;
                    let params = EmbeddingParams {
                        n_visible: self.n_visible,
                        n_hidden: self.n_hidden,
                        periodicity_v: pv,
                        periodicity_h: ph,
                        n_periodicity: np,
                        startv,
                        starto,
                    };
                    if self.admissible(&params) {
                        return (Some(params), checked);
                    }
                }
            }
        }
        (None, checked)
    }

    fn stride_candidates(&self, rows: usize, anchor: usize, base: usize) -> Vec<usize> {
        if rows <= 1 {
            return vec![0];
        }
        match self.g.neighbors(anchor) {
            Ok(nb) => nb
                .iter()
                .map(|&q| q as usize)
                .filter(|&q| q > base)
                .map(|q| q - base)
                .collect(),
            Err(_) => Vec::new(),
        }
    }

    /// Same conditions as `validate_with_defects`, with early exit.
    fn admissible(&self, p: &EmbeddingParams) -> bool {
        let (np, hv, hh) = (self.np, self.hv, self.hh);
        let n = self.g.num_qubits();
        let mut used = BTreeSet::new();
        for z in 0..hv {
            for x in 0..np {
                let s = p.startv + np * x + z * p.periodicity_v;
                if !self.chain_ok(s, hh) || !(s..s + hh).all(|q| used.insert(q)) {
                    return false;
                }
            }
        }
        for z in 0..hh {
            for x in 0..np {
                let s = p.starto + np * x + z * p.periodicity_h;
                if !self.chain_ok(s, hv) || !(s..s + hv).all(|q| used.insert(q)) {
                    return false;
                }
            }
        }
        for x in 0..hh {
            for y in 0..hv {
                for t in 0..np {
                    let a = p.startv + np * t + y * p.periodicity_v + x;
                    for k in 0..np {
                        let b = p.starto + np * k + x * p.periodicity_h + y;
                        if a >= n || b >= n || !self.edge(a, b) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}
