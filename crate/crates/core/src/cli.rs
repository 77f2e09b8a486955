//! Command-line front end. Every command reads its inputs from and writes
//! its artifacts to the output directory, plus a `manifest-<command>.json`
//! recording input and output hashes, the seed and the wall time.

use std::ffi::OsString;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::balance::BalanceMethod;
use crate::data::{self, BitCodec, CodecConfig, CsvSchema, TabularDataset};
use crate::embedding::{
    calibrate_params, generate_embedding, validate_with_defects, EmbeddingParams, RbmEmbedding,
};
use crate::error::{Error, Result};
use crate::evalx::{self, ClassifierKind, ExperimentConfig, QrbmSetup};
use crate::pegasus::PegasusGraph;
use crate::qrbm::{generate_synthetic, train_qrbm, write_training_log, QrbmTrainerConfig};
use crate::rbm::{train_cd, BinaryMatrix, CdConfig, Checkpoint, RbmParams, TrainingMetadata};
use crate::samplers::Backend;
use crate::seed::{derive_seed, rng_for};

#[derive(Debug, Parser)]
#[command(
    name = "qrbm",
    version,
    about = "Annealing-trained RBMs for generative class balancing"
)]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for artifacts and manifests.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendArg>,
    /// Sampler service URL for `--backend remote`.
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Proceed past validation warnings.
    #[arg(long, global = true)]
    pub force: bool,
    /// Suppress console summaries.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendArg {
    Exact,
    Sa,
    Remote,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Summarise a Pegasus graph.
    PegasusInfo {
        #[arg(long)]
        m: Option<usize>,
        /// Also write the edge list.
        #[arg(long)]
        edges: bool,
    },
    #[command(subcommand)]
    Embed(EmbedCmd),
    #[command(subcommand)]
    Data(DataCmd),
    #[command(subcommand)]
    Rbm(RbmCmd),
    #[command(subcommand)]
    Qrbm(QrbmCmd),
    #[command(subcommand)]
    Balance(BalanceCmd),
    #[command(subcommand)]
    Eval(EvalCmd),
    #[command(subcommand)]
    Report(ReportCmd),
    /// preprocess, split, embed, validate, binarize, evaluate, render.
    Pipeline,
}

#[derive(Debug, Subcommand)]
pub enum EmbedCmd {
    Gen,
    Validate {
        /// Embedding file; defaults to the one in the output directory.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    Calibrate,
}

#[derive(Debug, Subcommand)]
pub enum DataCmd {
    Preprocess,
    Binarize,
    Split,
}

#[derive(Debug, Subcommand)]
pub enum RbmCmd {
    TrainCd,
}

#[derive(Debug, Subcommand)]
pub enum QrbmCmd {
    Train,
    Sample {
        #[arg(long)]
        n: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum BalanceCmd {
    Run,
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    Run,
}

#[derive(Debug, Subcommand)]
pub enum ReportCmd {
    Render,
}

/// `"calibrate"` or explicit placement parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingChoice {
    Calibrate,
    Params(EmbeddingParams),
}

impl Serialize for EmbeddingChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EmbeddingChoice::Calibrate => s.serialize_str("calibrate"),
            EmbeddingChoice::Params(p) => p.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for EmbeddingChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Keyword(String),
            Params(EmbeddingParams),
        }
        match Raw::deserialize(d)? {
            Raw::Keyword(k) if k == "calibrate" => Ok(EmbeddingChoice::Calibrate),
            Raw::Keyword(k) => Err(serde::de::Error::custom(format!(
                "expected \"calibrate\", found {k:?}"
            ))),
            Raw::Params(p) => Ok(EmbeddingChoice::Params(p)),
        }
    }
}

/// Everything a run needs. Fields absent from the config file take the
/// desk-scale values of [`RunConfig::desk`]; `seed` must always be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// CSV path or `builtin:desk-fixture`.
    pub dataset: String,
    pub schema: CsvSchema,
    pub corr_threshold: f64,
    pub train_fraction: f64,
    pub codec: CodecConfig,
    /// Hidden units; defaults to the codec width.
    pub n_hidden: Option<usize>,
    pub pegasus_m: usize,
    pub embedding: EmbeddingChoice,
    pub periodicity_candidates: Vec<usize>,
    pub defects: Vec<usize>,
    pub trainer: QrbmTrainerConfig,
    pub cd: CdConfig,
    pub methods: Vec<BalanceMethod>,
    pub classifiers: Vec<ClassifierKind>,
    pub smote_k: usize,
    /// Rows produced by `qrbm sample`.
    pub n_samples: usize,
    pub out: PathBuf,
}

impl RunConfig {
    /// Defaults sized for the bundled fixture on one core.
    pub fn desk(seed: u64) -> Self {
        Self {
            seed,
            dataset: data::DESK_FIXTURE.into(),
            schema: CsvSchema::default(),
            corr_threshold: data::DEFAULT_CORR_THRESHOLD,
            train_fraction: data::DEFAULT_TRAIN_FRACTION,
            codec: CodecConfig {
                total_bits: 12,
                continuous_bits: 3,
                features: Vec::new(),
            },
            n_hidden: None,
            pegasus_m: 16,
            embedding: EmbeddingChoice::Calibrate,
            periodicity_candidates: vec![1],
            defects: Vec::new(),
            trainer: QrbmTrainerConfig {
                epochs: 20,
                sweeps: 100,
                batch_size: 32,
                ..QrbmTrainerConfig::default()
            },
            cd: CdConfig {
                epochs: 50,
                batch_size: 32,
                ..CdConfig::default()
            },
            methods: vec![
                BalanceMethod::None,
                BalanceMethod::RandomOversample,
                BalanceMethod::Smote,
                BalanceMethod::Qrbm,
            ],
            classifiers: ClassifierKind::ALL.to_vec(),
            smote_k: 5,
            n_samples: 1000,
            out: PathBuf::from("out"),
        }
    }

    /// Parses a config document over the desk defaults. Nested objects are
    /// merged key by key; errors name the offending path.
    pub fn from_json(text: &str, seed_override: Option<u64>) -> Result<Self> {
        let mut user: Value = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("config is not JSON: {e}")))?;
        let obj = user
            .as_object_mut()
            .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        if let Some(s) = seed_override {
            obj.insert("seed".into(), Value::from(s));
        }
        if !obj.contains_key("seed") {
            return Err(Error::Config(
                "seed is mandatory (set it in the config or pass --seed)".into(),
            ));
        }
        let mut merged = serde_json::to_value(Self::desk(0))?;
        merge(&mut merged, user);
        let text = merged.to_string();
        let de = &mut serde_json::Deserializer::from_str(&text);
        let cfg: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Config(format!("at {}: {}", e.path(), e.inner())))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!(
                "train_fraction {} outside (0, 1)",
                self.train_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.corr_threshold) {
            return bad(format!(
                "corr_threshold {} outside [0, 1]",
                self.corr_threshold
            ));
        }
        if self.methods.is_empty() || self.classifiers.is_empty() {
            return bad("methods and classifiers must be nonempty".into());
        }
        if self.n_samples == 0 {
            return bad("n_samples must be positive".into());
        }
        if let EmbeddingChoice::Params(p) = &self.embedding {
            if p.n_visible != self.codec.total_bits || p.n_hidden != self.hidden_units() {
                return bad(format!(
                    "embedding is {}x{} but the model is {}x{}",
                    p.n_visible,
                    p.n_hidden,
                    self.codec.total_bits,
                    self.hidden_units()
                ));
            }
        }
        self.trainer
            .check()
            .map_err(|e| Error::Config(format!("trainer: {e}")))
    }

    pub fn hidden_units(&self) -> usize {
        self.n_hidden.unwrap_or(self.codec.total_bits)
    }

    fn trainer_for(&self, stage: &str) -> QrbmTrainerConfig {
        QrbmTrainerConfig {
            seed: derive_seed(self.seed, stage),
            ..self.trainer.clone()
        }
    }

    /// Hash of the configuration with the output directory blanked.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        sha256_hex(serde_json::to_string(&c).expect("serialisable").as_bytes())
    }
}

fn merge(base: &mut Value, user: Value) {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) => {
            for (k, v) in u {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub mod artifacts {
    pub const PEGASUS: &str = "pegasus.json";
    pub const EDGES: &str = "pegasus_edges.txt";
    pub const CALIBRATION: &str = "calibration.json";
    pub const EMBEDDING: &str = "embedding.json";
    pub const VALIDATION: &str = "validation.json";
    pub const CLEAN: &str = "clean.csv";
    pub const PREPROCESS: &str = "preprocess_report.json";
    pub const TRAIN: &str = "train.csv";
    pub const TEST: &str = "test.csv";
    pub const SPLIT: &str = "split.json";
    pub const CODEC: &str = "codec.json";
    pub const MINORITY_BITS: &str = "minority_bits.csv";
    pub const BINARIZE: &str = "binarize.json";
    pub const RBM_CD: &str = "rbm_cd.json";
    pub const RBM_CD_LOG: &str = "rbm_cd_log.csv";
    pub const QRBM: &str = "qrbm.json";
    pub const QRBM_LOG: &str = "qrbm_log.csv";
    pub const SYNTHETIC_BITS: &str = "synthetic_bits.csv";
    pub const SYNTHETIC: &str = "synthetic.csv";
    pub const SAMPLES: &str = "samples.csv";
    pub const SAMPLES_META: &str = "samples.json";
    pub const REPORT: &str = "report.csv";
    pub const TIMINGS: &str = "timings.csv";
    pub const REPORT_JSON: &str = "report.json";
    pub const REPORT_TEXT: &str = "report.txt";
}

use artifacts as art;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    /// Absent for files that embed wall times.
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: Option<u64>,
    pub config_sha256: Option<String>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub wall_ms: f64,
}

/// Output directory plus the bookkeeping for one command's manifest.
struct Stage<'a> {
    dir: &'a Path,
    command: String,
    cfg: Option<&'a RunConfig>,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
    started: Instant,
}

impl<'a> Stage<'a> {
    fn new(dir: &'a Path, command: &str, cfg: Option<&'a RunConfig>) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir,
            command: command.into(),
            cfg,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn display(&self, p: &Path) -> String {
        p.strip_prefix(self.dir)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned()
    }

    /// Reads an artifact produced by `producer`, recording it as an input.
    fn read(&mut self, name: &str, producer: &str) -> Result<Vec<u8>> {
        let p = self.path(name);
        if !p.exists() {
            return Err(Error::MissingArtifact {
                path: p,
                producer: producer.into(),
            });
        }
        self.read_path(&p)
    }

    fn read_path(&mut self, p: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(p)?;
        self.inputs.push(FileRecord {
            path: self.display(p),
            sha256: Some(sha256_hex(&bytes)),
        });
        Ok(bytes)
    }

    /// Input carrying wall times; recorded without a hash.
    fn read_volatile(&mut self, name: &str, producer: &str) -> Result<Vec<u8>> {
        let bytes = self.read(name, producer)?;
        if let Some(last) = self.inputs.last_mut() {
            last.sha256 = None;
        }
        Ok(bytes)
    }

    fn note_input(&mut self, name: &str, bytes: &[u8]) {
        self.inputs.push(FileRecord {
            path: name.into(),
            sha256: Some(sha256_hex(bytes)),
        });
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.path(name), bytes)?;
        self.outputs.push(FileRecord {
            path: name.into(),
            sha256: Some(sha256_hex(bytes)),
        });
        Ok(())
    }

    /// Output whose content carries wall times; not hashed.
    fn write_volatile(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.path(name), bytes)?;
        self.outputs.push(FileRecord {
            path: name.into(),
            sha256: None,
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn write_dataset(&mut self, name: &str, ds: &TabularDataset) -> Result<()> {
        let mut buf = Vec::new();
        ds.write_csv(&mut buf)?;
        self.write(name, &buf)
    }

    fn finish(self) -> Result<Manifest> {
        let m = Manifest {
            command: self.command.clone(),
            seed: self.cfg.map(|c| c.seed),
            config_sha256: self.cfg.map(RunConfig::fingerprint),
            inputs: self.inputs,
            outputs: self.outputs,
            wall_ms: self.started.elapsed().as_secs_f64() * 1e3,
        };
        let slug = self.command.replace(' ', "-");
        let mut s = serde_json::to_string_pretty(&m)?;
        s.push('\n');
        fs::write(self.dir.join(format!("manifest-{slug}.json")), s)?;
        Ok(m)
    }
}

fn read_dataset(bytes: &[u8], schema: &CsvSchema) -> Result<TabularDataset> {
    data::read_csv(bytes, schema)
}

fn load_input_dataset(stage: &mut Stage, cfg: &RunConfig) -> Result<TabularDataset> {
    if cfg.dataset == data::DESK_FIXTURE {
        let ds = data::desk_fixture(cfg.seed);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf)?;
        stage.note_input(data::DESK_FIXTURE, &buf);
        return Ok(ds);
    }
    let p = PathBuf::from(&cfg.dataset);
    if !p.exists() {
        return Err(Error::Config(format!(
            "dataset {} does not exist",
            p.display()
        )));
    }
    let bytes = stage.read_path(&p)?;
    read_dataset(&bytes, &cfg.schema)
}

pub fn write_bits_csv(m: &BinaryMatrix) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record((0..m.ncols()).map(|j| format!("b{j}")))?;
    for r in m.rows() {
        w.write_record(r.iter().map(|b| b.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn read_bits_csv(bytes: &[u8]) -> Result<BinaryMatrix> {
    let mut r = csv::Reader::from_reader(bytes);
    let cols = r.headers()?.len();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, c)| match c.trim() {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(Error::Cell {
                    row: i + 1,
                    column: format!("b{j}"),
                    message: format!("not a bit: {other:?}"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    BinaryMatrix::from_rows(&rows, cols)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BinarizeSummary {
    minority_label: String,
    minority_rows: usize,
    clipped_values: usize,
    total_bits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SplitSummary {
    train_rows: usize,
    test_rows: usize,
    train_counts: [usize; 2],
    test_counts: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PegasusSummary {
    m: usize,
    num_qubits: usize,
    num_edges: usize,
    max_degree: usize,
}

/// Parsed command line plus the resolved configuration.
pub struct Session {
    pub cli: Cli,
    pub config: Option<RunConfig>,
}

impl Session {
    fn say(&self, args: std::fmt::Arguments) {
        if !self.cli.quiet {
            print!("{args}");
        }
    }

    fn sayln(&self, args: std::fmt::Arguments) {
        if !self.cli.quiet {
            println!("{args}");
        }
    }

    pub fn new(cli: Cli) -> Result<Self> {
        let config = match (&cli.config, cli.seed) {
            (Some(p), seed) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                Some(RunConfig::from_json(&text, seed)?)
            }
            (None, Some(seed)) => Some(RunConfig::desk(seed)),
            (None, None) => None,
        };
        let mut s = Self { cli, config };
        if let Some(cfg) = s.config.as_mut() {
            if let Some(out) = &s.cli.out {
                cfg.out = out.clone();
            }
            match (s.cli.backend, &s.cli.endpoint, &cfg.trainer.sampler) {
                (Some(BackendArg::Exact), _, _) => cfg.trainer.sampler = Backend::Exact,
                (Some(BackendArg::Sa), _, _) => cfg.trainer.sampler = Backend::Sa,
                (Some(BackendArg::Remote), Some(url), _) => {
                    cfg.trainer.sampler = Backend::Remote {
                        endpoint: url.clone(),
                    }
                }
                (Some(BackendArg::Remote), None, Backend::Remote { .. }) => {}
                (Some(BackendArg::Remote), None, _) => {
                    return Err(Error::Config("--backend remote needs --endpoint".into()));
                }
                (None, _, _) => {}
            }
        }
        Ok(s)
    }

    fn cfg(&self) -> Result<&RunConfig> {
        self.config.as_ref().ok_or_else(|| {
            Error::Config("no configuration: pass --config FILE or at least --seed N".into())
        })
    }

    fn out_dir(&self) -> PathBuf {
        self.cli
            .out
            .clone()
            .or_else(|| self.config.as_ref().map(|c| c.out.clone()))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn execute(&self) -> Result<()> {
        match &self.cli.command {
            Command::PegasusInfo { m, edges } => self.pegasus_info(*m, *edges),
            Command::Embed(EmbedCmd::Gen) => self.embed_gen("embed gen"),
            Command::Embed(EmbedCmd::Calibrate) => self.embed_gen("embed calibrate"),
            Command::Embed(EmbedCmd::Validate { file }) => self.embed_validate(file.as_deref()),
            Command::Data(DataCmd::Preprocess) => self.data_preprocess(),
            Command::Data(DataCmd::Split) => self.data_split(),
            Command::Data(DataCmd::Binarize) => self.data_binarize(),
            Command::Rbm(RbmCmd::TrainCd) => self.rbm_train_cd(),
            Command::Qrbm(QrbmCmd::Train) => self.qrbm_train(),
            Command::Qrbm(QrbmCmd::Sample { n }) => self.qrbm_sample(*n),
            Command::Balance(BalanceCmd::Run) => self.balance_run(),
            Command::Eval(EvalCmd::Run) => self.eval_run(),
            Command::Report(ReportCmd::Render) => self.report_render(),
            Command::Pipeline => self.pipeline(),
        }
    }

    fn pegasus_info(&self, m: Option<usize>, edges: bool) -> Result<()> {
        let dir = self.out_dir();
        let m = m
            .or(self.config.as_ref().map(|c| c.pegasus_m))
            .unwrap_or(16);
        let mut stage = Stage::new(&dir, "pegasus-info", self.config.as_ref())?;
        let g = PegasusGraph::new(m)?;
        let summary = PegasusSummary {
            m,
            num_qubits: g.num_qubits(),
            num_edges: g.num_edges(),
            max_degree: (0..g.num_qubits())
                .map(|q| g.degree(q))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .max()
                .unwrap_or(0),
        };
        self.sayln(format_args!(
            "P{m}: {} qubits, {} couplers, max degree {}",
            summary.num_qubits, summary.num_edges, summary.max_degree
        ));
        stage.write_json(art::PEGASUS, &summary)?;
        if edges {
            let mut buf = Vec::new();
            g.write_edge_list(&mut buf)?;
            stage.write(art::EDGES, &buf)?;
        }
        stage.finish()?;
        Ok(())
    }

    fn graph(&self) -> Result<PegasusGraph> {
        PegasusGraph::new(self.cfg()?.pegasus_m)
    }

    fn embed_gen(&self, command: &str) -> Result<()> {
        let cfg = self.cfg()?;
        let dir = self.out_dir();
        let mut stage = Stage::new(&dir, command, Some(cfg))?;
        let g = self.graph()?;
        let params = match (&cfg.embedding, command) {
            (EmbeddingChoice::Params(p), "embed gen") => *p,
            _ => {
                let cal = calibrate_params(
                    &g,
                    cfg.codec.total_bits,
                    cfg.hidden_units(),
                    &cfg.periodicity_candidates,
                    &cfg.defects,
                )?;
                stage.write_json(art::CALIBRATION, &cal)?;
                cal.params
            }
        };
        let emb = generate_embedding(&params, g.num_qubits())?;
        let mut text = emb.to_json()?;
        text.push('\n');
        stage.write(art::EMBEDDING, text.as_bytes())?;
        self.sayln(format_args!(
            "{}x{} embedding: chains {}/{}, {} qubits",
            emb.n_visible(),
            emb.n_hidden(),
            emb.visible_chain_len(),
            emb.hidden_chain_len(),
            emb.qubits().len()
        ));
        stage.finish()?;
        Ok(())
    }

    fn embed_validate(&self, file: Option<&Path>) -> Result<()> {
        let dir = self.out_dir();
        let m = self.config.as_ref().map_or(16, |c| c.pegasus_m);
        let defects = self
            .config
            .as_ref()
            .map(|c| c.defects.clone())
            .unwrap_or_default();
        let mut stage = Stage::new(&dir, "embed validate", self.config.as_ref())?;
        let bytes = match file {
            Some(p) => stage.read_path(p)?,
            None => stage.read(art::EMBEDDING, "embed gen")?,
        };
        let emb = std::str::from_utf8(&bytes)
            .map_err(|e| Error::Validation(format!("embedding file is not UTF-8: {e}")))
            .and_then(|s| {
                RbmEmbedding::from_json(s)
                    .map_err(|e| Error::Validation(format!("embedding file is malformed: {e}")))
            })?;
        let g = PegasusGraph::new(m)?;
        let report = validate_with_defects(&g, &emb, &defects)
            .map_err(|e| Error::Validation(e.to_string()))?;
        stage.write_json(art::VALIDATION, &report)?;
        self.sayln(format_args!(
            "valid={} violations={}",
            report.valid,
            report.violations()
        ));
        stage.finish()?;
        if !report.valid {
            return Err(Error::Validation(format!(
                "{} violations on P{m}",
                report.violations()
            )));
        }
        Ok(())
    }

    fn data_preprocess(&self) -> Result<()> {
        let cfg = self.cfg()?;
        let dir = self.out_dir();
        let mut stage = Stage::new(&dir, "data preprocess", Some(cfg))?;
        let raw = load_input_dataset(&mut stage, cfg)?;
        let (clean, report) = data::preprocess(&raw, cfg.corr_threshold)?;
        stage.write_dataset(art::CLEAN, &clean)?;
        stage.write_json(art::PREPROCESS, &report)?;
        self.sayln(format_args!(
            "{} rows -> {} (nan {}, inf {}, duplicates {}), dropped features {:?} {:?}",
            raw.len(),
            clean.len(),
            report.rows_dropped_nan,
            report.rows_dropped_inf,
            report.duplicates_removed,
            report.features_dropped_zerovar,
            report.features_dropped_corr
        ));
        stage.finish()?;
        Ok(())
    }

    fn load_artifact_dataset(
        &self,
        stage: &mut Stage,
        name: &str,
        producer: &str,
    ) -> Result<TabularDataset> {
        let bytes = stage.read(name, producer)?;
        read_dataset(&bytes, &self.cfg()?.schema)
    }

    fn data_split(&self) -> Result<()> {
        let cfg = self.cfg()?;
        let dir = self.out_dir();
        let mut stage = Stage::new(&dir, "data split", Some(cfg))?;
        let ds = self.load_artifact_dataset(&mut stage, art::CLEAN, "data preprocess")?;
        let (train, test) = data::split(&ds, cfg.train_fraction, cfg.seed)?;
        stage.write_dataset(art::TRAIN, &train)?;
        stage.write_dataset(art::TEST, &test)?;
        let summary = SplitSummary {
            train_rows: train.len(),
            test_rows: test.len(),
            train_counts: train.class_counts(),
            test_counts: test.class_counts(),
        };
        stage.write_json(art::SPLIT, &summary)?;
        self.sayln(format_args!(
            "train {} {:?}, test {} {:?}",
            train.len(),
            summary.train_counts,
            test.len(),
            summary.test_counts
        ));
        stage.finish()?;
        Ok(())
    }

    fn data_binarize(&self) -> Result<()> {
        let cfg = self.cfg()?;
        let dir = self.out_dir();
        let mut stage = Stage::new(&dir, "data binarize", Some(cfg))?;
        let train = self.load_artifact_dataset(&mut stage, art::TRAIN, "data split")?;
        let codec = data::fit_codec(&train, &cfg.codec)?;
        let minority_class = u8::from(train.class_counts()[1] <= train.class_counts()[0]);
        let classes = train.classes();
        let idx: Vec<usize> = (0..train.len())
            .filter(|&i| classes[i] == minority_class)
            .collect();
        let (bits, clipped) = codec.encode_dataset(&train.select_rows(&idx))?;
        let summary = BinarizeSummary {
            minority_label: data::dominant_label(&train, minority_class).ok_or_else(|| {
                Error::InsufficientData("training split has no minority rows".into())
            })?,
            minority_rows: bits.nrows(),
            clipped_values: clipped,
            total_bits: codec.total_bits,
        };
        let mut text = codec.to_json()?;
        text.push('\n');
        stage.write(art::CODEC, text.as_bytes())?;
        stage.write(art::MINORITY_BITS, &write_bits_csv(&bits)?)?;
        stage.write_json(art::BINARIZE, &summary)?;
        self.sayln(format_args!(
            "{} features in {} bits, {} minority rows",
            codec.features.len(),
            codec.total_bits,
            bits.nrows()
        ));
        stage.finish()?;
        Ok(())
    }

    fn rbm_train_cd(&self) -> Result<()> {
        let cfg = self.cfg()?;
        let dir = self.out_dir();
        let mut stage = Stage::new(&dir, "rbm train-cd", Some(cfg))?;
        let bits = read_bits_csv(&stage.read(art::MINORITY_BITS, "data binarize")?)?;
        let cd = CdConfig {
            seed: derive_seed(cfg.seed, "rbm/cd"),
            ..cfg.cd
        };
        let init = RbmParams::random(
            bits.ncols(),
            cfg.hidden_units(),
            &mut rng_for(derive_seed(cfg.seed, "rbm/init"), 0),
        );
        let (params, log) = train_cd(init, &bits, &cd, &mut rng_for(cd.seed, 0))?;
        let ck = Checkpoint::new(
            &params,
            TrainingMetadata {
                seed: cfg.seed,
                epoch: log.len(),
                method: format!("cd-{}", cd.k),
            },
        );
        stage.write(art::RBM_CD, format!("{}\n", ck.to_json()?).as_bytes())?;
        let mut buf = Vec::new();
        write_training_log(&log, &mut buf)?;
        stage.write_volatile(art::RBM_CD_LOG, &buf)?;
        if let Some(last) = log.last() {
            self.sayln(format_args!(
                "epoch {}: objective {:.6}",
                last.epoch, last.objective
            ));
        }
        stage.finish()?;
        Ok(())
    }

    fn load_embedding(&self, stage: &mut Stage) -> Result<RbmEmbedding> {
        let bytes = stage.read(art::EMBEDDING, "embed gen")?;
        RbmEmbedding::from_json(
            std::str::from_utf8(&bytes).map_err(|e| Error::Malformed(e.to_string()))?,
        )
    }

    fn load_codec(&self, stage: &mut Stage) -> Result<BitCodec> {
        let bytes = stage.read(art::CODEC, "data binarize")?;
        BitCodec::from_json(
            std::str::from_utf8(&bytes).map_err(|e| Error::Malformed(e.to_string()))?,
        )
    }

    /// Graph for embedding validation, or `None` when `--force` skips it.
    fn checked_graph(&self, emb: &RbmEmbedding) -> Result<Option<PegasusGraph>> {
        let g = self.graph()?;
        let report = validate_with_defects(&g, emb, &self.cfg()?.defects)?;
        if report.valid {
            Ok(Some(g))
        } else if self.cli.force {
            eprintln!(
                "warning: embedding has {} violations; continuing because of --force",
                report.violations()
            );
            Ok(None)
        } else {
            Err(Error::Validation(format!(
                "embedding has {} violations on P{} (run `embed validate` for details, or pass --force)",
                report.violations(),
                g.m()
            )))
        }
    }

    fn qrbm_train(&self) -> Result<()> {
        let cfg = self.cfg()?;
        let dir = self.out_dir();
        let mut stage = Stage::new(&dir, "qrbm train", Some(cfg))?;
        let emb = self.load_embedding(&mut stage)?;
        let bits = read_bits_csv(&stage.read(art::MINORITY_BITS, "data binarize")?)?;
        let graph = self.checked_graph(&emb)?;
        let trainer = cfg.trainer_for("qrbm/train");
        let model = train_qrbm(&bits, &trainer, &emb, graph.as_ref())?;
        let ck = Checkpoint::new(
            &model.params,
            TrainingMetadata {
                seed: cfg.seed,
                epoch: model.log.len(),
                method: "qrbm".into(),
            },
        );
        stage.write(art::QRBM, format!("{}\n", ck.to_json()?).as_bytes())?;
        let mut buf = Vec::new();
        write_training_log(&model.log, &mut buf)?;
        stage.write_volatile(art::QRBM_LOG, &buf)?;
        if let Some(last) = model.log.last() {
            self.sayln(format_args!(
                "epoch {}: objective {:.6}, chain breaks {:.4}",
                last.epoch, last.objective, last.chain_break_rate
            ));
        }
        stage.finish()?;
        Ok(())
    }

    fn qrbm_sample(&self, n: Option<usize>) -> Result<()> {
        let cfg = self.cfg()?;
        let dir = self.out_dir();
        let mut stage = Stage::new(&dir, "qrbm sample", Some(cfg))?;
        let ck = Checkpoint::from_json(
            std::str::from_utf8(&stage.read(art::QRBM, "qrbm train")?)
                .map_err(|e| Error::Malformed(e.to_string()))?,
        )?;
        let emb = self.load_embedding(&mut stage)?;
        let codec = self.load_codec(&mut stage)?;
        let summary: BinarizeSummary =
            serde_json::from_slice(&stage.read(art::BINARIZE, "data binarize")?)?;
        let n = n.unwrap_or(cfg.n_samples);
        let synthetic =
            generate_synthetic(&ck.params()?, &emb, &cfg.trainer_for("qrbm/sample"), n)?;
        let template = TabularDataset::new(
            codec.feature_names(),
            Vec::new(),
            Vec::new(),
            &cfg.schema.benign_label,
        )?;
        let template = TabularDataset {
            label_column: cfg.schema.label_column.clone(),
            ..template
        };
        let decoded = codec.decode_dataset(&synthetic.rows, &summary.minority_label, &template)?;
        stage.write(art::SYNTHETIC_BITS, &write_bits_csv(&synthetic.rows)?)?;
        stage.write_dataset(art::SYNTHETIC, &decoded)?;
        if let Some(first) = synthetic.jobs.first() {
            let mut buf = Vec::new();
            first.write_csv(&mut buf)?;
            stage.write(art::SAMPLES, &buf)?;
            stage.write_volatile(
                art::SAMPLES_META,
                serde_json::to_string_pretty(&first.metadata)?.as_bytes(),
            )?;
        }
        self.sayln(format_args!(
            "{} synthetic rows from {} jobs",
            decoded.len(),
            synthetic.jobs.len()
        ));
        stage.finish()?;
        Ok(())
    }

    fn experiment_config(&self, stage: &mut Stage, need_qrbm: bool) -> Result<ExperimentConfig> {
        let cfg = self.cfg()?;
        let qrbm = if need_qrbm {
            let emb = self.load_embedding(stage)?;
            let codec = self.load_codec(stage)?;
            let graph = self.checked_graph(&emb)?;
            Some(QrbmSetup {
                codec,
                embedding: emb,
                graph,
                trainer: cfg.trainer.clone(),
            })
        } else {
            None
        };
        Ok(ExperimentConfig {
            methods: cfg.methods.clone(),
            classifiers: cfg.classifiers.clone(),
            smote_k: cfg.smote_k,
            qrbm,
            seed: cfg.seed,
        })
    }

    fn balance_run(&self) -> Result<()> {
        let cfg = self.cfg()?;
        let dir = self.out_dir();
        let mut stage = Stage::new(&dir, "balance run", Some(cfg))?;
        let train = self.load_artifact_dataset(&mut stage, art::TRAIN, "data split")?;
        let ecfg =
            self.experiment_config(&mut stage, cfg.methods.contains(&BalanceMethod::Qrbm))?;
        let train = match &ecfg.qrbm {
            Some(q) => train.select_features(&q.codec.feature_names())?,
            None => train,
        };
        for &method in cfg.methods.iter().filter(|m| **m != BalanceMethod::None) {
            let r = evalx::balance_with(method, &train, &ecfg)?;
            stage.write_dataset(&format!("balanced_{method}.csv"), &r.dataset)?;
            stage.write_volatile(
                &format!("balance_{method}.json"),
                serde_json::to_string_pretty(&r.summary())?.as_bytes(),
            )?;
            self.sayln(format_args!(
                "{method}: {:?} -> {:?}, {} synthetic rows in {:.1} ms",
                r.before, r.after, r.synthetic_rows, r.wall_ms
            ));
        }
        stage.finish()?;
        Ok(())
    }

    fn eval_run(&self) -> Result<()> {
        let cfg = self.cfg()?;
        let dir = self.out_dir();
        let mut stage = Stage::new(&dir, "eval run", Some(cfg))?;
        let train = self.load_artifact_dataset(&mut stage, art::TRAIN, "data split")?;
        let test = self.load_artifact_dataset(&mut stage, art::TEST, "data split")?;
        let ecfg =
            self.experiment_config(&mut stage, cfg.methods.contains(&BalanceMethod::Qrbm))?;
        let mut synthetic: Vec<(String, Vec<u8>)> = Vec::new();
        let report = evalx::run_experiment_with(&train, &test, &ecfg, &mut |r| {
            if r.method != BalanceMethod::None {
                let n = r.dataset.len() - r.synthetic_rows;
                let rows: Vec<usize> = (n..r.dataset.len()).collect();
                let mut buf = Vec::new();
                r.dataset.select_rows(&rows).write_csv(&mut buf)?;
                synthetic.push((format!("synthetic_{}.csv", r.method), buf));
            }
            Ok(())
        })?;
        for (name, bytes) in &synthetic {
            stage.write(name, bytes)?;
        }
        let mut buf = Vec::new();
        evalx::write_report_csv(&report, &mut buf)?;
        stage.write(art::REPORT, &buf)?;
        let mut buf = Vec::new();
        evalx::write_timings_csv(&report, &mut buf)?;
        stage.write_volatile(art::TIMINGS, &buf)?;
        stage.write_volatile(
            art::REPORT_JSON,
            serde_json::to_string_pretty(&report)?.as_bytes(),
        )?;
        self.say(format_args!(
            "{}",
            evalx::render_text(&report.cells, &report.averaging)
        ));
        stage.finish()?;
        Ok(())
    }

    fn report_render(&self) -> Result<()> {
        let dir = self.out_dir();
        let mut stage = Stage::new(&dir, "report render", self.config.as_ref())?;
        let mut cells = evalx::read_report_csv(stage.read(art::REPORT, "eval run")?.as_slice())?;
        let timed = stage.path(art::TIMINGS).exists();
        if timed {
            let bytes = stage.read_volatile(art::TIMINGS, "eval run")?;
            evalx::read_timings_csv(BufReader::new(bytes.as_slice()), &mut cells)?;
        }
        let text = evalx::render_text(&cells, evalx::AVERAGING);
        if timed {
            stage.write_volatile(art::REPORT_TEXT, text.as_bytes())?;
        } else {
            stage.write(art::REPORT_TEXT, text.as_bytes())?;
        }
        for metric in ["precision", "recall", "f1", "minority_recall"] {
            stage.write(
                &format!("report_{metric}.svg"),
                evalx::render_svg(&cells, metric)?.as_bytes(),
            )?;
        }
        self.say(format_args!("{text}"));
        stage.finish()?;
        Ok(())
    }

    fn pipeline(&self) -> Result<()> {
        self.data_preprocess()?;
        self.data_split()?;
        self.embed_gen("embed gen")?;
        self.embed_validate(None)?;
        self.data_binarize()?;
        self.eval_run()?;
        self.report_render()
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            let _ = e.print();
            Error::Config(String::new())
        }
        _ => Error::Config(e.to_string()),
    })?;
    Session::new(cli)?.execute()
}

/// Process entry point: runs the command line and maps errors to exit codes.
pub fn main_with_exit_code() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match Session::new(cli).and_then(|s| s.execute()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            e.exit_code()
        }
    }
}
