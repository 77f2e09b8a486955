//! Tabular flow records: CSV ingestion, cleaning, feature pruning,
//! de-duplication, stratified splitting and the fixed-width bit codec.
//!
//! Labels are kept as the original strings; the binary task treats every
//! label other than the benign one as an attack.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rbm::BinaryMatrix;
use crate::seed::{derive_seed, rng_for};

pub const DEFAULT_LABEL_COLUMN: &str = "Label";
pub const DEFAULT_BENIGN_LABEL: &str = "BENIGN";
pub const DEFAULT_CORR_THRESHOLD: f64 = 0.9;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;

/// Largest width of a single codec field.
pub const MAX_FIELD_BITS: u32 = 52;

/// Hints for [`load_csv`]. Header names are compared after trimming.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsvSchema {
    pub label_column: String,
    pub benign_label: String,
    /// Columns ignored on load (identifiers, timestamps, addresses).
    pub drop_columns: Vec<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            label_column: DEFAULT_LABEL_COLUMN.into(),
            benign_label: DEFAULT_BENIGN_LABEL.into(),
            drop_columns: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub features: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub label_column: String,
    pub benign_label: String,
}

impl TabularDataset {
    pub fn new(
        features: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<String>,
        benign_label: &str,
    ) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some((i, r)) = rows
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != features.len())
        {
            return Err(Error::Dimension(format!(
                "row {i} has {} values, expected {}",
                r.len(),
                features.len()
            )));
        }
        Ok(Self {
            features,
            rows,
            labels,
            label_column: DEFAULT_LABEL_COLUMN.into(),
            benign_label: benign_label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::Parameter(format!("unknown feature {name:?}")))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn is_attack(&self, label: &str) -> bool {
        !label.trim().eq_ignore_ascii_case(self.benign_label.trim())
    }

    /// Binary class per row: 1 attack, 0 benign.
    pub fn classes(&self) -> Vec<u8> {
        self.labels
            .iter()
            .map(|l| u8::from(self.is_attack(l)))
            .collect()
    }

    /// `[benign, attack]` row counts.
    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0, 0];
        for l in &self.labels {
            c[usize::from(self.is_attack(l))] += 1;
        }
        c
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
            label_column: self.label_column.clone(),
            benign_label: self.benign_label.clone(),
        }
    }

    pub fn select_features(&self, names: &[String]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| self.feature_index(n))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.keep_columns(&idx))
    }

    fn keep_columns(&self, idx: &[usize]) -> Self {
        Self {
            features: idx.iter().map(|&j| self.features[j].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| idx.iter().map(|&j| r[j]).collect())
                .collect(),
            labels: self.labels.clone(),
            label_column: self.label_column.clone(),
            benign_label: self.benign_label.clone(),
        }
    }

    /// Appends rows of a dataset with identical columns.
    pub fn extend(&mut self, other: &TabularDataset) -> Result<()> {
        if other.features != self.features {
            return Err(Error::Dimension("feature columns differ".into()));
        }
        self.rows.extend(other.rows.iter().cloned());
        self.labels.extend(other.labels.iter().cloned());
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.features.clone();
        header.push(self.label_column.clone());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for (row, label) in self.rows.iter().zip(&self.labels) {
            record.clear();
            record.extend(row.iter().map(|x| format_value(*x)));
            record.push(label.clone());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(File::create(path)?))
    }

    /// SHA-256 of the canonical CSV form, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        hex::encode(Sha256::digest(&buf))
    }
}

/// Round-trip-safe decimal rendering.
pub fn format_value(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "Infinity" } else { "-Infinity" }.into()
    } else {
        format!("{x}")
    }
}

/// Numeric cell parser: empty and `NaN` become NaN, `Infinity`/`inf` (any
/// case, optional sign) become ±∞.
pub fn parse_value(cell: &str) -> Option<f64> {
    let t = cell.trim();
    if t.is_empty() {
        return Some(f64::NAN);
    }
    t.parse::<f64>().ok()
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<TabularDataset> {
    read_csv(File::open(path)?, schema)
}

pub fn read_csv<R: Read>(input: R, schema: &CsvSchema) -> Result<TabularDataset> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(input);
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.iter().all(String::is_empty) {
        return Err(Error::Malformed("missing header".into()));
    }
    let label_idx = header
        .iter()
        .position(|h| *h == schema.label_column.trim())
        .ok_or_else(|| {
            Error::Malformed(format!(
                "label column {:?} not in header",
                schema.label_column
            ))
        })?;
    let dropped: HashSet<&str> = schema.drop_columns.iter().map(|s| s.trim()).collect();
    let keep: Vec<usize> = (0..header.len())
        .filter(|&j| j != label_idx && !dropped.contains(header[j].as_str()))
        .collect();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(keep.len());
        for &j in &keep {
            let cell = record.get(j).unwrap_or("");
            row.push(parse_value(cell).ok_or_else(|| Error::Cell {
                row: r + 1,
                column: header[j].clone(),
                message: format!("not a number: {cell:?}"),
            })?);
        }
        rows.push(row);
        labels.push(record.get(label_idx).unwrap_or("").trim().to_string());
    }
    Ok(TabularDataset {
        features: keep.iter().map(|&j| header[j].clone()).collect(),
        rows,
        labels,
        label_column: schema.label_column.trim().to_string(),
        benign_label: schema.benign_label.clone(),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub rows_dropped_nan: usize,
    pub rows_dropped_inf: usize,
    pub features_dropped_corr: Vec<String>,
    pub features_dropped_zerovar: Vec<String>,
    pub duplicates_removed: usize,
    pub final_rows: usize,
}

/// Drops rows holding NaN (counted first) or ±∞.
pub fn clean(ds: &TabularDataset) -> (TabularDataset, PreprocessReport) {
    let mut report = PreprocessReport::default();
    let mut keep = Vec::with_capacity(ds.len());
    for (i, r) in ds.rows.iter().enumerate() {
        if r.iter().any(|x| x.is_nan()) {
            report.rows_dropped_nan += 1;
        } else if r.iter().any(|x| x.is_infinite()) {
            report.rows_dropped_inf += 1;
        } else {
            keep.push(i);
        }
    }
    let out = ds.select_rows(&keep);
    report.final_rows = out.len();
    (out, report)
}

/// Pearson correlation matrix of all feature columns; zero-variance
/// columns get NaN entries.
pub fn correlation_matrix(ds: &TabularDataset) -> Vec<Vec<f64>> {
    let d = ds.n_features();
    let n = ds.len() as f64;
    let cols: Vec<Vec<f64>> = (0..d).map(|j| ds.column(j)).collect();
    let centred: Vec<(Vec<f64>, f64)> = cols
        .par_iter()
        .map(|c| {
            let mean = c.iter().sum::<f64>() / n;
            let z: Vec<f64> = c.iter().map(|x| x - mean).collect();
            let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
            (z, norm)
        })
        .collect();
    (0..d)
        .into_par_iter()
        .map(|a| {
            (0..d)
                .map(|b| {
                    let (za, na) = &centred[a];
                    let (zb, nb) = &centred[b];
                    if *na == 0.0 || *nb == 0.0 {
                        f64::NAN
                    } else {
                        za.iter().zip(zb).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
                    }
                })
                .collect()
        })
        .collect()
}

fn is_constant(col: &[f64]) -> bool {
    col.windows(2).all(|w| w[0] == w[1])
}

/// Removes zero-variance features, then for every pair with
/// `|r| ≥ threshold` the later-indexed feature.
pub fn prune_features(
    ds: &TabularDataset,
    threshold: f64,
) -> Result<(TabularDataset, PreprocessReport)> {
    if ds.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} rows; correlation needs at least 2",
            ds.len()
        )));
    }
    let mut report = PreprocessReport::default();
    let d = ds.n_features();
    let mut dropped = vec![false; d];
    for (j, flag) in dropped.iter_mut().enumerate() {
        if is_constant(&ds.column(j)) {
            *flag = true;
            report.features_dropped_zerovar.push(ds.features[j].clone());
        }
    }
    let r = correlation_matrix(ds);
    for a in 0..d {
        if dropped[a] {
            continue;
        }
        for b in a + 1..d {
            if !dropped[b] && r[a][b].abs() >= threshold {
                dropped[b] = true;
                report.features_dropped_corr.push(ds.features[b].clone());
            }
        }
    }
    let keep: Vec<usize> = (0..d).filter(|&j| !dropped[j]).collect();
    let out = ds.keep_columns(&keep);
    report.final_rows = out.len();
    Ok((out, report))
}

fn row_key(row: &[f64], label: &str) -> (Vec<u64>, String) {
    // +0.0 and −0.0 compare equal
    (
        row.iter()
            .map(|&x| if x == 0.0 { 0 } else { x.to_bits() })
            .collect(),
        label.to_string(),
    )
}

/// Removes exact duplicate rows (features and label), keeping first occurrences.
pub fn dedup(ds: &TabularDataset) -> (TabularDataset, usize) {
    let mut seen = HashSet::with_capacity(ds.len());
    let keep: Vec<usize> = (0..ds.len())
        .filter(|&i| seen.insert(row_key(&ds.rows[i], &ds.labels[i])))
        .collect();
    let removed = ds.len() - keep.len();
    (ds.select_rows(&keep), removed)
}

/// Clean, then prune and de-duplicate until neither changes anything, so
/// that running the whole pipeline again is a no-op.
pub fn preprocess(
    ds: &TabularDataset,
    corr_threshold: f64,
) -> Result<(TabularDataset, PreprocessReport)> {
    let (mut cur, mut report) = clean(ds);
    loop {
        let (pruned, pr) = prune_features(&cur, corr_threshold)?;
        let (deduped, removed) = dedup(&pruned);
        let changed = removed > 0 || pruned.n_features() != cur.n_features();
        report
            .features_dropped_corr
            .extend(pr.features_dropped_corr);
        report
            .features_dropped_zerovar
            .extend(pr.features_dropped_zerovar);
        report.duplicates_removed += removed;
        cur = deduped;
        if !changed {
            break;
        }
    }
    report.final_rows = cur.len();
    Ok((cur, report))
}

/// Rows of a class of size `n` that go to the training side.
pub fn train_count(n: usize, train_fraction: f64) -> usize {
    (n as f64 * train_fraction).round() as usize
}

/// Stratified split by binary class. Each class contributes
/// `round(count · fraction)` rows to the training side; both sides keep
/// the original row order.
pub fn split(
    ds: &TabularDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(TabularDataset, TabularDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let classes = ds.classes();
    let mut train = Vec::new();
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| classes[i] == class).collect();
        let n_train = train_count(idx.len(), train_fraction);
        idx.shuffle(&mut rng_for(derive_seed(seed, "split"), u64::from(class)));
        train.extend_from_slice(&idx[..n_train]);
    }
    train.sort_unstable();
    let mut in_train = vec![false; ds.len()];
    for &i in &train {
        in_train[i] = true;
    }
    let test: Vec<usize> = (0..ds.len()).filter(|&i| !in_train[i]).collect();
    Ok((ds.select_rows(&train), ds.select_rows(&test)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantization {
    /// `value − min` written as an unsigned integer; lossless.
    IntegerOffset,
    /// Affine map of `[min, max]` onto `2^n − 1` steps.
    Scaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureField {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub n_bits: u32,
    pub kind: Quantization,
}

impl FeatureField {
    /// Width of one quantization step.
    pub fn step(&self) -> f64 {
        match self.kind {
            Quantization::IntegerOffset => 1.0,
            Quantization::Scaled => (self.max - self.min) / ((1u64 << self.n_bits) - 1) as f64,
        }
    }

    fn levels(&self) -> u64 {
        (1u64 << self.n_bits) - 1
    }
}

/// Fixed-width binary encoding of selected features. Fields are laid out
/// in order, each most significant bit first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitCodec {
    pub features: Vec<FeatureField>,
    pub total_bits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodecConfig {
    pub total_bits: usize,
    /// Width given to features that are not integer-valued.
    pub continuous_bits: u32,
    /// Explicit feature list; when empty, features are ranked by mutual
    /// information with the binary class and the budget is filled greedily.
    pub features: Vec<String>,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            total_bits: 120,
            continuous_bits: 8,
            features: Vec::new(),
        }
    }
}

/// Smallest `n` with `max − min ≤ 2^n − 1`, i.e. enough codes for every
/// integer in the range (range 255 → 8 bits, range 256 → 9 bits).
pub fn integer_bits(min: f64, max: f64) -> u32 {
    let range = (max - min).round().max(0.0);
    let mut n = 1;
    while n < 63 && (((1u64 << n) - 1) as f64) < range {
        n += 1;
    }
    n
}

fn field_for(ds: &TabularDataset, j: usize, continuous_bits: u32) -> FeatureField {
    let col = ds.column(j);
    let (min, max) = col
        .iter()
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let (min, max) = if min.is_finite() {
        (min, max)
    } else {
        (0.0, 0.0)
    };
    let integral = col
        .iter()
        .filter(|x| x.is_finite())
        .all(|x| x.fract() == 0.0);
    if integral {
        FeatureField {
            name: ds.features[j].clone(),
            min,
            max,
            n_bits: integer_bits(min, max),
            kind: Quantization::IntegerOffset,
        }
    } else {
        FeatureField {
            name: ds.features[j].clone(),
            min,
            max,
            n_bits: continuous_bits,
            kind: Quantization::Scaled,
        }
    }
}

/// Mutual information (nats) between a feature, cut into `bins` equal-width
/// bins over its observed range, and the binary class.
pub fn mutual_information(values: &[f64], classes: &[u8], bins: usize) -> f64 {
    let n = values.len() as f64;
    if values.is_empty() || bins == 0 {
        return 0.0;
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    let width = (hi - lo) / bins as f64;
    let mut joint = vec![[0.0f64; 2]; bins];
    for (&x, &c) in values.iter().zip(classes) {
        let b = if width > 0.0 {
            (((x - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        joint[b][usize::from(c)] += 1.0;
    }
    let pc = [0, 1].map(|c| joint.iter().map(|r| r[c]).sum::<f64>() / n);
    let mut mi = 0.0;
    for r in &joint {
        let pb = (r[0] + r[1]) / n;
        for c in 0..2 {
            let p = r[c] / n;
            if p > 0.0 {
                mi += p * (p / (pb * pc[c])).ln();
            }
        }
    }
    mi.max(0.0)
}

pub fn fit_codec(ds: &TabularDataset, cfg: &CodecConfig) -> Result<BitCodec> {
    if cfg.total_bits == 0 {
        return Err(Error::Parameter("total_bits must be positive".into()));
    }
    if cfg.continuous_bits == 0 || cfg.continuous_bits > MAX_FIELD_BITS {
        return Err(Error::Parameter(format!(
            "continuous_bits {} outside 1..={MAX_FIELD_BITS}",
            cfg.continuous_bits
        )));
    }
    if ds.is_empty() {
        return Err(Error::InsufficientData(
            "codec needs at least one row".into(),
        ));
    }
    if !cfg.features.is_empty() {
        let fields = cfg
            .features
            .iter()
            .map(|name| Ok(field_for(ds, ds.feature_index(name)?, cfg.continuous_bits)))
            .collect::<Result<Vec<_>>>()?;
        let used: usize = fields.iter().map(|f| f.n_bits as usize).sum();
        if used != cfg.total_bits || fields.iter().any(|f| f.n_bits > MAX_FIELD_BITS) {
            return Err(Error::Allocation(format!(
                "{used} bits demanded for a budget of {}: {}",
                cfg.total_bits,
                demands(&fields)
            )));
        }
        return Ok(BitCodec {
            features: fields,
            total_bits: cfg.total_bits,
        });
    }

    let classes = ds.classes();
    let mut ranked: Vec<(usize, f64)> = (0..ds.n_features())
        .into_par_iter()
        .map(|j| (j, mutual_information(&ds.column(j), &classes, 16)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut remaining = cfg.total_bits;
    let mut fields = Vec::new();
    let mut considered = Vec::new();
    for (j, _) in ranked {
        let f = field_for(ds, j, cfg.continuous_bits);
        if (f.n_bits as usize) <= remaining && f.n_bits <= MAX_FIELD_BITS {
            remaining -= f.n_bits as usize;
            fields.push(f);
        } else {
            considered.push(f);
        }
        if remaining == 0 {
            break;
        }
    }
    if fields.is_empty() {
        return Err(Error::Allocation(format!(
            "no feature fits a budget of {} bits: {}",
            cfg.total_bits,
            demands(&considered)
        )));
    }
    // leftover bits widen the first scaled field, else the first field
    let target = fields
        .iter()
        .position(|f| f.kind == Quantization::Scaled)
        .unwrap_or(0);
    let widened = fields[target].n_bits as usize + remaining;
    if widened > MAX_FIELD_BITS as usize {
        return Err(Error::Allocation(format!(
            "{remaining} bits left over and no field can absorb them: {}",
            demands(&fields)
        )));
    }
    fields[target].n_bits = widened as u32;
    Ok(BitCodec {
        features: fields,
        total_bits: cfg.total_bits,
    })
}

fn demands(fields: &[FeatureField]) -> String {
    fields
        .iter()
        .map(|f| format!("{}={}", f.name, f.n_bits))
        .collect::<Vec<_>>()
        .join(", ")
}

impl BitCodec {
    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    /// Encodes values given in codec feature order. Returns the bits and
    /// the number of values clipped into `[min, max]`.
    pub fn encode_row(&self, row: &[f64]) -> Result<(Vec<u8>, usize)> {
        if row.len() != self.features.len() {
            return Err(Error::Dimension(format!(
                "row has {} values, codec expects {}",
                row.len(),
                self.features.len()
            )));
        }
        let mut bits = Vec::with_capacity(self.total_bits);
        let mut clipped = 0;
        for (f, &x) in self.features.iter().zip(row) {
            if !x.is_finite() {
                return Err(Error::Domain(format!("non-finite value for {}", f.name)));
            }
            let y = if x < f.min || x > f.max {
                clipped += 1;
                x.clamp(f.min, f.max)
            } else {
                x
            };
            let q = match f.kind {
                Quantization::IntegerOffset => (y - f.min).round() as u64,
                Quantization::Scaled if f.max > f.min => {
                    ((y - f.min) / (f.max - f.min) * f.levels() as f64).round() as u64
                }
                Quantization::Scaled => 0,
            }
            .min(f.levels());
            bits.extend((0..f.n_bits).rev().map(|b| ((q >> b) & 1) as u8));
        }
        Ok((bits, clipped))
    }

    /// Inverse of [`encode_row`](Self::encode_row) up to one half step;
    /// integer codes beyond the fitted range decode to `max`.
    pub fn decode_row(&self, bits: &[u8]) -> Result<Vec<f64>> {
        if bits.len() != self.total_bits {
            return Err(Error::Dimension(format!(
                "{} bits, codec width is {}",
                bits.len(),
                self.total_bits
            )));
        }
        let mut out = Vec::with_capacity(self.features.len());
        let mut pos = 0;
        for f in &self.features {
            let mut q = 0u64;
            for &b in &bits[pos..pos + f.n_bits as usize] {
                if b > 1 {
                    return Err(Error::Domain(format!("bit value {b}")));
                }
                q = (q << 1) | u64::from(b);
            }
            pos += f.n_bits as usize;
            out.push(match f.kind {
                Quantization::IntegerOffset => (f.min + q as f64).min(f.max),
                Quantization::Scaled => f.min + q as f64 * f.step(),
            });
        }
        Ok(out)
    }

    /// Projects `ds` onto the codec features and encodes every row.
    pub fn encode_dataset(&self, ds: &TabularDataset) -> Result<(BinaryMatrix, usize)> {
        let projected = ds.select_features(&self.feature_names())?;
        let mut rows = Vec::with_capacity(projected.len());
        let mut clipped = 0;
        for r in &projected.rows {
            let (bits, c) = self.encode_row(r)?;
            clipped += c;
            rows.push(bits);
        }
        Ok((BinaryMatrix::from_rows(&rows, self.total_bits)?, clipped))
    }

    /// Decodes every row of `bits` into a dataset labelled `label`.
    pub fn decode_dataset(
        &self,
        bits: &BinaryMatrix,
        label: &str,
        template: &TabularDataset,
    ) -> Result<TabularDataset> {
        let rows = bits
            .rows()
            .map(|b| self.decode_row(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(TabularDataset {
            features: self.feature_names(),
            labels: vec![label.to_string(); rows.len()],
            rows,
            label_column: template.label_column.clone(),
            benign_label: template.benign_label.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: BitCodec = serde_json::from_str(s)?;
        let sum: usize = c.features.iter().map(|f| f.n_bits as usize).sum();
        if sum != c.total_bits {
            return Err(Error::Malformed(format!(
                "field widths sum to {sum}, total_bits is {}",
                c.total_bits
            )));
        }
        Ok(c)
    }
}

/// Most common original label among rows of the given binary class.
pub fn dominant_label(ds: &TabularDataset, class: u8) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in &ds.labels {
        if u8::from(ds.is_attack(l)) == class {
            *counts.entry(l.as_str()).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(a.0)))
        .map(|(l, _)| l.to_string())
}

pub const DESK_FIXTURE: &str = "builtin:desk-fixture";

/// Synthetic flow table: 10⁴ rows at 95:5 benign:attack. Four informative
/// features are Gaussian per class (attack shifted by ±2 and 2.5 times as
/// wide); a constant column and a near-copy column give preprocessing
/// something to drop.
pub fn desk_fixture(seed: u64) -> TabularDataset {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rng_for(derive_seed(seed, "desk-fixture"), 0);
    let features = [
        "flow_duration",
        "fwd_packet_rate",
        "bwd_bytes_mean",
        "iat_std",
        "flow_duration_copy",
        "protocol_flag",
    ]
    .map(String::from)
    .to_vec();
    let n = 10_000;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let attack = i % 20 == 7;
        let mut r: Vec<f64> = (0..4)
            .map(|j| {
                let z: f64 = StandardNormal.sample(&mut rng);
                if attack {
                    (if j % 2 == 0 { 2.0 } else { -2.0 }) + 2.5 * z
                } else {
                    z
                }
            })
            .collect();
        let noise: f64 = StandardNormal.sample(&mut rng);
        r.push(1.5 * r[0] + 0.05 * noise);
        r.push(6.0);
        rows.push(r);
        labels.push(if attack { "DDoS" } else { DEFAULT_BENIGN_LABEL }.to_string());
    }
    TabularDataset {
        features,
        rows,
        labels,
        label_column: DEFAULT_LABEL_COLUMN.into(),
        benign_label: DEFAULT_BENIGN_LABEL.into(),
    }
}
