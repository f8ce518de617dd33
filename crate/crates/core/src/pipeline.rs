//! The commands behind the `lot` binary.
//!
//! Each command reads a [`PipelineConfig`] and its input files and writes CSV/JSON artifacts under
//! the output directory. Wall-clock measurements only ever go to `timings_*` files, so every other
//! artifact is a pure function of the config and the inputs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::barycenter::{
    generate_barycenters_between_classes, generate_barycenters_general,
    generate_barycenters_within_class, mean_std, pushforward_spread, relative_error_against,
    true_barycenter, BarycenterResult, TrueBarycenterOptions, WeightVector, WithinWeights,
};
use crate::classify::{get_best_classifier, stratified_split, EvaluationReport};
use crate::embedding::{embed_point_clouds_with, mean_row, EmbedOptions, LabeledEmbeddingSet};
use crate::error::{LotError, Notice, Result};
use crate::io::{
    coordinates_csv, file_stem, read_embeddings, read_manifest, read_point_cloud, table_csv,
    write_atomic, write_dataset, write_embeddings, write_json, write_point_cloud, write_trace,
};
use crate::measures::{
    fitted_gaussian_reference, gaussian_reference, synthetic_dataset, DiscreteMeasure,
    LabeledCloudSet, SyntheticSpec,
};
use crate::reduction::{balance, lda_reduction, pca_reduction};
use crate::rng::{self, sub_seed};
use crate::transport::{CostExponent, Method};

pub const DEFAULT_REFERENCE_POINTS: usize = 300;
pub const DEFAULT_OUT: &str = "lot_out";

/// Exit status for an error: 2 bad configuration, 3 bad data, 4 solver failure.
pub fn exit_code(err: &LotError) -> i32 {
    match err.root_cause() {
        LotError::Config(_) | LotError::InvalidParameter(_) => 2,
        LotError::NonConvergence { .. }
        | LotError::KernelUnderflow { .. }
        | LotError::SolverFailure(_)
        | LotError::DegenerateFamily(_) => 4,
        _ => 3,
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceSpec {
    /// `m` Gaussian samples. With `fit` the axes get the pooled mean and spread of the data,
    /// otherwise the standard normal.
    Gaussian {
        m: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default = "yes")]
        fit: bool,
    },
    File {
        path: PathBuf,
    },
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        ReferenceSpec::Gaussian {
            m: DEFAULT_REFERENCE_POINTS,
            d: None,
            seed: None,
            fit: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub seed: u64,
    pub reference: ReferenceSpec,
    pub method: Method,
    pub normalize: bool,
    pub exponent: CostExponent,
    /// Center every cloud at the origin before embedding.
    pub center: bool,
    pub out: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    manifest: PathBuf,
    seed: Option<u64>,
    #[serde(default)]
    reference: ReferenceSpec,
    #[serde(default)]
    method: Method,
    #[serde(default = "yes")]
    normalize: bool,
    #[serde(default)]
    exponent: CostExponent,
    #[serde(default)]
    center: bool,
    out: Option<PathBuf>,
}

impl PipelineConfig {
    /// Defaults for everything but the manifest, seed and output directory.
    pub fn new(manifest: impl Into<PathBuf>, seed: u64, out: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            manifest: manifest.into(),
            seed,
            reference: ReferenceSpec::default(),
            method: Method::Exact,
            normalize: true,
            exponent: CostExponent::Two,
            center: false,
            out: out.into(),
        }
    }

    /// Reads a TOML config. Relative paths inside it are resolved against its directory;
    /// `seed` and `out` override the file's values.
    pub fn load(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LotError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_toml(&text, base, seed, out)
    }

    pub fn from_toml(
        text: &str,
        base: &Path,
        seed: Option<u64>,
        out: Option<PathBuf>,
    ) -> Result<Self> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| LotError::Config(e.message().to_string()))?;
        let seed = seed
            .or(raw.seed)
            .ok_or_else(|| LotError::Config("a seed is required (config or --seed)".into()))?;
        let reference = match raw.reference {
            ReferenceSpec::File { path } => ReferenceSpec::File {
                path: base.join(path),
            },
            g => g,
        };
        let cfg = PipelineConfig {
            manifest: base.join(raw.manifest),
            seed,
            reference,
            method: raw.method,
            normalize: raw.normalize,
            exponent: raw.exponent,
            center: raw.center,
            out: out.unwrap_or_else(|| base.join(raw.out.unwrap_or_else(|| DEFAULT_OUT.into()))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.manifest.is_file() {
            return Err(LotError::Config(format!(
                "manifest {} does not exist",
                self.manifest.display()
            )));
        }
        match &self.reference {
            ReferenceSpec::Gaussian { m, d, .. } => {
                if *m == 0 || *d == Some(0) {
                    return Err(LotError::Config(
                        "gaussian reference needs m >= 1 and d >= 1".into(),
                    ));
                }
            }
            ReferenceSpec::File { path } => {
                if !path.is_file() {
                    return Err(LotError::Config(format!(
                        "reference file {} does not exist",
                        path.display()
                    )));
                }
            }
        }
        if let Method::Sinkhorn(s) = &self.method {
            s.validate().map_err(|e| LotError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn embed_options(&self) -> EmbedOptions {
        EmbedOptions {
            method: self.method,
            normalize: self.normalize,
            exponent: self.exponent,
        }
    }

    /// Seed of the Gaussian reference; also seeds true-barycenter initializations.
    pub fn reference_seed(&self) -> u64 {
        match &self.reference {
            ReferenceSpec::Gaussian { seed: Some(s), .. } => *s,
            _ => sub_seed(self.seed, "reference"),
        }
    }

    fn reference_points(&self) -> Option<usize> {
        match &self.reference {
            ReferenceSpec::Gaussian { m, .. } => Some(*m),
            ReferenceSpec::File { .. } => None,
        }
    }
}

/// The dataset and reference a config describes.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: LabeledCloudSet,
    pub reference: DiscreteMeasure,
}

pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared> {
    let mut data = read_manifest(&cfg.manifest)?;
    if data.is_empty() {
        return Err(LotError::InvalidDataset("manifest lists no clouds".into()));
    }
    if cfg.center {
        let clouds = data
            .clouds()
            .iter()
            .map(DiscreteMeasure::centered)
            .collect();
        data = LabeledCloudSet::new(clouds, data.labels().to_vec())?;
    }
    let reference = reference_for(cfg, &data)?;
    Ok(Prepared { data, reference })
}

fn reference_for(cfg: &PipelineConfig, data: &LabeledCloudSet) -> Result<DiscreteMeasure> {
    match &cfg.reference {
        ReferenceSpec::Gaussian { m, d, fit, .. } => {
            if let Some(d) = d {
                if *d != data.dim() {
                    return Err(LotError::Config(format!(
                        "reference dimension {d} but the data has dimension {}",
                        data.dim()
                    )));
                }
            }
            if *fit {
                fitted_gaussian_reference(data.clouds(), *m, cfg.reference_seed())
            } else {
                let d = data.dim();
                let zeros = Array1::zeros(d);
                let ones = Array1::ones(d);
                gaussian_reference(*m, d, zeros.view(), ones.view(), cfg.reference_seed())
            }
        }
        ReferenceSpec::File { path } => {
            let r = read_point_cloud(path)?;
            if r.dim() != data.dim() {
                return Err(LotError::DimensionError {
                    expected: data.dim(),
                    found: r.dim(),
                });
            }
            Ok(r)
        }
    }
}

/// Everything needed to reproduce an embedding run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub method: Method,
    pub exponent: CostExponent,
    pub normalize: bool,
    pub center: bool,
    pub reference: ReferenceSpec,
    pub reference_hash: String,
    pub dataset_hash: String,
    pub clouds: usize,
    pub classes: Vec<String>,
    pub reference_points: usize,
    pub dim: usize,
}

fn dataset_hash(data: &LabeledCloudSet) -> String {
    let mut h = Sha256::new();
    for (cloud, label) in data.clouds().iter().zip(data.labels()) {
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        h.update(cloud.content_hash().as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn run_metadata(cfg: &PipelineConfig, prep: &Prepared) -> RunMetadata {
    RunMetadata {
        seed: cfg.seed,
        method: cfg.method,
        exponent: cfg.exponent,
        normalize: cfg.normalize,
        center: cfg.center,
        reference: cfg.reference.clone(),
        reference_hash: prep.reference.content_hash(),
        dataset_hash: dataset_hash(&prep.data),
        clouds: prep.data.len(),
        classes: prep.data.classes(),
        reference_points: prep.reference.len(),
        dim: prep.reference.dim(),
    }
}

#[derive(Debug, Serialize)]
struct Timing {
    seconds: f64,
}

fn write_timing(out: &Path, command: &str, seconds: f64) -> Result<()> {
    write_json(
        &out.join(format!("timings_{command}.json")),
        &Timing { seconds },
    )
}

/// Writes `synth.json` and a dataset (`manifest.json`, `clouds/`) under `out`.
pub fn cmd_synth(spec: &SyntheticSpec, out: &Path) -> Result<PathBuf> {
    let set = synthetic_dataset(spec)?;
    let manifest = write_dataset(out, &set)?;
    write_json(&out.join("synth.json"), spec)?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct EmbedOutput {
    pub embeddings: LabeledEmbeddingSet,
    pub metadata: RunMetadata,
    pub seconds: f64,
}

/// Embeds every cloud and writes `embeddings.csv`, `reference.csv`, `transport_costs.csv` and
/// `run.json`.
pub fn cmd_embed(cfg: &PipelineConfig) -> Result<EmbedOutput> {
    let prep = prepare(cfg)?;
    let out = embed_prepared(cfg, &prep)?;
    write_timing(&cfg.out, "embed", out.seconds)?;
    Ok(out)
}

fn embed_prepared(cfg: &PipelineConfig, prep: &Prepared) -> Result<EmbedOutput> {
    let start = Instant::now();
    let embeddings = embed_point_clouds_with(&prep.reference, &prep.data, &cfg.embed_options())?;
    let seconds = start.elapsed().as_secs_f64();
    let metadata = run_metadata(cfg, prep);
    write_embeddings(&cfg.out.join("embeddings.csv"), &embeddings)?;
    write_point_cloud(&cfg.out.join("reference.csv"), &prep.reference)?;
    let costs = embeddings
        .transport_costs()
        .iter()
        .zip(embeddings.labels())
        .enumerate()
        .map(|(k, (c, l))| vec![k.to_string(), l.clone(), c.to_string()])
        .collect();
    write_atomic(
        &cfg.out.join("transport_costs.csv"),
        &table_csv(&["cloud", "label", "cost"], costs),
    )?;
    write_json(&cfg.out.join("run.json"), &metadata)?;
    Ok(EmbedOutput {
        embeddings,
        metadata,
        seconds,
    })
}

/// Reuses `embeddings.csv` when `run.json` matches this config and dataset, else embeds afresh.
pub fn load_or_embed(cfg: &PipelineConfig, prep: &Prepared) -> Result<LabeledEmbeddingSet> {
    let expected = run_metadata(cfg, prep);
    let stored = std::fs::read_to_string(cfg.out.join("run.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<RunMetadata>(&t).ok());
    if stored.as_ref() == Some(&expected) {
        if let Ok(set) = read_embeddings(&cfg.out.join("embeddings.csv"), &prep.reference) {
            if set.labels() == prep.data.labels() {
                return Ok(set);
            }
        }
    }
    Ok(embed_prepared(cfg, prep)?.embeddings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceMethod {
    Pca,
    Lda,
}

impl ReduceMethod {
    fn name(self) -> &'static str {
        match self {
            ReduceMethod::Pca => "pca",
            ReduceMethod::Lda => "lda",
        }
    }
}

impl FromStr for ReduceMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pca" => Ok(ReduceMethod::Pca),
            "lda" => Ok(ReduceMethod::Lda),
            other => Err(format!("unknown reduction {other:?}; expected pca or lda")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReduceOutput {
    pub method: String,
    pub components: usize,
    #[serde(skip)]
    pub coordinates: ndarray::Array2<f64>,
    #[serde(skip)]
    pub labels: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub singular_values: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub explained_variance: Vec<f64>,
    pub notices: Vec<Notice>,
}

/// Balances the embeddings and writes `k` coordinates per balanced row to
/// `{pca,lda}_coordinates.csv`, with a summary in `{pca,lda}_summary.json`.
pub fn cmd_reduce(cfg: &PipelineConfig, method: ReduceMethod, k: usize) -> Result<ReduceOutput> {
    if k == 0 {
        return Err(LotError::Config("k must be at least 1".into()));
    }
    let prep = prepare(cfg)?;
    let set = load_or_embed(cfg, &prep)?;
    let seed = sub_seed(cfg.seed, "balance");
    let output = match method {
        ReduceMethod::Pca => {
            let (model, balanced) = pca_reduction(set.rows(), set.labels(), seed)?;
            let available = model.components.nrows();
            let used = k.min(available);
            let mut notices = model.notices.clone();
            if used < k {
                notices.push(Notice::ComponentsClamped { requested: k, used });
            }
            ReduceOutput {
                method: method.name().into(),
                components: used,
                coordinates: model.transform(balanced.rows.view(), used)?,
                labels: balanced.labels,
                singular_values: model.singular_values.to_vec(),
                explained_variance: model.explained_variance().to_vec(),
                notices,
            }
        }
        ReduceMethod::Lda => {
            let (model, projected, labels) = lda_reduction(set.rows(), set.labels(), k, seed)?;
            ReduceOutput {
                method: method.name().into(),
                components: projected.ncols(),
                coordinates: projected,
                labels,
                singular_values: vec![],
                explained_variance: vec![],
                notices: model.notices,
            }
        }
    };
    let name = method.name();
    write_atomic(
        &cfg.out.join(format!("{name}_coordinates.csv")),
        &coordinates_csv(output.coordinates.view(), &output.labels),
    )?;
    write_json(&cfg.out.join(format!("{name}_summary.json")), &output)?;
    Ok(output)
}

#[derive(Debug, Serialize)]
struct Split<'a> {
    test_fraction: f64,
    train: &'a [usize],
    test: &'a [usize],
}

/// Stratified split, oversampling within each side, then the classifier roster. Writes
/// `classification.json`, `classification.txt` and `split.json`.
pub fn cmd_classify(cfg: &PipelineConfig, test_fraction: f64) -> Result<EvaluationReport> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(LotError::Config(format!(
            "test fraction must lie in [0, 1), got {test_fraction}"
        )));
    }
    let prep = prepare(cfg)?;
    let classes = prep.data.classes();
    if classes.len() < 2 {
        return Err(LotError::InvalidDataset(format!(
            "classification needs at least 2 classes, got {}",
            classes.len()
        )));
    }
    let set = load_or_embed(cfg, &prep)?;
    let (train, test) = stratified_split(set.labels(), test_fraction, sub_seed(cfg.seed, "split"))?;
    let pick = |idx: &[usize]| {
        (
            set.rows().select(Axis(0), idx),
            idx.iter()
                .map(|&i| set.labels()[i].clone())
                .collect::<Vec<_>>(),
        )
    };
    let (train_rows, train_labels) = pick(&train);
    let train_bal = balance(
        train_rows.view(),
        &train_labels,
        sub_seed(cfg.seed, "balance-train"),
    )?;
    let (test_rows, test_labels) = pick(&test);
    let (test_rows, test_labels) = if test.is_empty() {
        (test_rows, test_labels)
    } else {
        let b = balance(
            test_rows.view(),
            &test_labels,
            sub_seed(cfg.seed, "balance-test"),
        )?;
        (b.rows, b.labels)
    };
    let report = get_best_classifier(
        train_bal.rows.view(),
        &train_bal.labels,
        test_rows.view(),
        &test_labels,
        sub_seed(cfg.seed, "classify"),
    )?;
    let mut json = report.to_json();
    json.push('\n');
    write_atomic(&cfg.out.join("classification.json"), json.as_bytes())?;
    write_atomic(
        &cfg.out.join("classification.txt"),
        report.to_table().as_bytes(),
    )?;
    write_json(
        &cfg.out.join("split.json"),
        &Split {
            test_fraction,
            train: &train,
            test: &test,
        },
    )?;
    Ok(report)
}

/// One row of a relative-error table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub class: String,
    pub iteration: usize,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl DeltaRow {
    fn from_values(class: &str, iteration: usize, values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        DeltaRow {
            class: class.to_string(),
            iteration,
            mean,
            std,
            n: values.len(),
        }
    }
}

/// `class,iteration,mean,std,n`.
pub fn delta_csv(rows: &[DeltaRow]) -> Vec<u8> {
    table_csv(
        &["class", "iteration", "mean", "std", "n"],
        rows.iter()
            .map(|r| {
                vec![
                    r.class.clone(),
                    r.iteration.to_string(),
                    r.mean.to_string(),
                    r.std.to_string(),
                    r.n.to_string(),
                ]
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarycenterMode {
    Within,
    Between,
    General,
}

impl FromStr for BarycenterMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "within" => Ok(BarycenterMode::Within),
            "between" => Ok(BarycenterMode::Between),
            "general" => Ok(BarycenterMode::General),
            other => Err(format!(
                "unknown mode {other:?}; expected within, between or general"
            )),
        }
    }
}

/// `fixed`, `random:N` or `file:PATH` (a JSON array of weight vectors).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WeightSource {
    Fixed,
    Random(usize),
    File(PathBuf),
}

impl FromStr for WeightSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "fixed" {
            return Ok(WeightSource::Fixed);
        }
        if let Some(n) = s.strip_prefix("random:") {
            return match n.parse::<usize>() {
                Ok(n) if n > 0 => Ok(WeightSource::Random(n)),
                _ => Err(format!("random:N needs a positive count, got {n:?}")),
            };
        }
        if let Some(p) = s.strip_prefix("file:") {
            return Ok(WeightSource::File(p.into()));
        }
        Err(format!(
            "weights must be fixed, random:N or file:PATH, got {s:?}"
        ))
    }
}

impl fmt::Display for WeightSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSource::Fixed => write!(f, "fixed"),
            WeightSource::Random(n) => write!(f, "random:{n}"),
            WeightSource::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

fn read_weights(path: &Path) -> Result<Vec<WeightVector>> {
    let text = std::fs::read_to_string(path).map_err(|e| LotError::io(path, e))?;
    let ws: Vec<WeightVector> =
        serde_json::from_str(&text).map_err(|e| LotError::format(path, e.to_string()))?;
    if ws.is_empty() {
        return Err(LotError::InvalidWeights(format!(
            "{} lists no weights",
            path.display()
        )));
    }
    Ok(ws)
}

fn random_weights(n: usize, len: usize, seed: u64) -> Result<Vec<WeightVector>> {
    let mut rng = rng::seeded(seed);
    (0..n)
        .map(|_| WeightVector::random(len, &mut rng))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarycenterArgs {
    pub mode: BarycenterMode,
    pub weights: WeightSource,
    /// Class pairs for between-class mode; every unordered pair when `None`.
    pub pairs: Option<Vec<(String, String)>>,
    pub compare_true: bool,
}

#[derive(Debug, Clone)]
pub struct BarycenterOutput {
    pub results: Vec<BarycenterResult>,
    /// Relative error of each result against its true barycenter.
    pub deltas: Vec<f64>,
    pub table: Vec<DeltaRow>,
    pub true_barycenters: Vec<DiscreteMeasure>,
    pub lot_seconds: f64,
    pub true_seconds: f64,
    pub notices: Vec<Notice>,
}

#[derive(Debug, Serialize)]
struct BarycenterRecord<'a> {
    label: &'a str,
    file: String,
    source_indices: &'a [usize],
    weights: &'a WeightVector,
    delta: f64,
}

#[derive(Debug, Serialize)]
struct BarycenterIndex<'a> {
    weights: String,
    barycenters: Vec<BarycenterRecord<'a>>,
    notices: &'a [Notice],
}

/// The first three members of each class, for the fixed weight table.
fn first_three(set: &LabeledEmbeddingSet) -> Result<(LabeledEmbeddingSet, Vec<usize>)> {
    let mut sel = Vec::new();
    for label in set.classes() {
        let idx = set.indices_of(&label);
        if idx.len() < 3 {
            return Err(LotError::InvalidWeights(format!(
                "fixed weights need 3 members per class; {label:?} has {}",
                idx.len()
            )));
        }
        sel.extend_from_slice(&idx[..3]);
    }
    let sub = LabeledEmbeddingSet::new(
        set.rows().select(Axis(0), &sel),
        sel.iter().map(|&i| set.labels()[i].clone()).collect(),
        set.reference().clone(),
        set.normalized(),
        vec![],
    )?;
    Ok((sub, sel))
}

fn synthesize(
    cfg: &PipelineConfig,
    set: &LabeledEmbeddingSet,
    args: &BarycenterArgs,
) -> Result<Vec<BarycenterResult>> {
    let given = |len_hint: Option<usize>| -> Result<Option<Vec<WeightVector>>> {
        Ok(match &args.weights {
            WeightSource::Fixed => None,
            WeightSource::Random(n) => Some(random_weights(
                *n,
                len_hint.unwrap_or(0),
                sub_seed(cfg.seed, "weights"),
            )?),
            WeightSource::File(p) => Some(read_weights(p)?),
        })
    };
    match args.mode {
        BarycenterMode::Within => match &args.weights {
            WeightSource::Fixed => {
                let (sub, sel) = first_three(set)?;
                let mut results = generate_barycenters_within_class(
                    &sub,
                    &WithinWeights::Given(WeightVector::fixed()),
                    0,
                )?;
                for r in &mut results {
                    r.source_indices = r.source_indices.iter().map(|&i| sel[i]).collect();
                }
                Ok(results)
            }
            WeightSource::Random(n) => generate_barycenters_within_class(
                set,
                &WithinWeights::Random(*n),
                sub_seed(cfg.seed, "weights"),
            ),
            WeightSource::File(p) => {
                generate_barycenters_within_class(set, &WithinWeights::Given(read_weights(p)?), 0)
            }
        },
        BarycenterMode::Between => {
            let pairs = match &args.pairs {
                Some(p) => p.clone(),
                None => {
                    let classes = set.classes();
                    let mut p = Vec::new();
                    for i in 0..classes.len() {
                        for j in i + 1..classes.len() {
                            p.push((classes[i].clone(), classes[j].clone()));
                        }
                    }
                    p
                }
            };
            if pairs.is_empty() {
                return Err(LotError::InvalidDataset(
                    "between-class barycenters need at least 2 classes".into(),
                ));
            }
            if args.weights == WeightSource::Fixed {
                return Err(LotError::Config(
                    "fixed weights have three entries; use random:N or file:PATH for pairs".into(),
                ));
            }
            let ws = given(Some(2))?;
            generate_barycenters_between_classes(
                set,
                &pairs,
                ws.as_deref(),
                sub_seed(cfg.seed, "pairs"),
            )
        }
        BarycenterMode::General => {
            let ws = match given(Some(set.len()))? {
                Some(ws) => ws,
                None => WeightVector::fixed(),
            };
            let rows = generate_barycenters_general(set.rows(), &ws)?;
            let all: Vec<usize> = (0..set.len()).collect();
            rows.rows()
                .into_iter()
                .zip(ws)
                .map(|(row, w)| {
                    Ok(BarycenterResult {
                        embedding: row.to_owned(),
                        cloud: set.pushforward_row(row)?,
                        weights: w,
                        source_indices: all.clone(),
                        label: "all".into(),
                    })
                })
                .collect()
        }
    }
}

/// Synthesizes LOT barycenters, writes them under `barycenters/` with `barycenters.json`, and
/// scores each against the true barycenter in `barycenter_delta.csv`. With `compare_true` the
/// embeddings are recomputed so the LOT side is timed end to end, and the true barycenters and
/// `timings_barycenter.csv` are written as well.
pub fn cmd_barycenter(cfg: &PipelineConfig, args: &BarycenterArgs) -> Result<BarycenterOutput> {
    let prep = prepare(cfg)?;
    let (set, embed_seconds) = if args.compare_true {
        let e = embed_prepared(cfg, &prep)?;
        (e.embeddings, e.seconds)
    } else {
        (load_or_embed(cfg, &prep)?, 0.0)
    };
    let start = Instant::now();
    let results = synthesize(cfg, &set, args)?;
    let lot_seconds = embed_seconds + start.elapsed().as_secs_f64();

    let opts = TrueBarycenterOptions::new(prep.reference.len(), cfg.reference_seed());
    let mut spreads: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut deltas = Vec::with_capacity(results.len());
    let mut truths = Vec::with_capacity(results.len());
    let mut notices = Vec::new();
    let mut true_seconds = 0.0;
    for r in &results {
        let clouds: Vec<DiscreteMeasure> = r
            .source_indices
            .iter()
            .map(|&i| prep.data.clouds()[i].clone())
            .collect();
        let start = Instant::now();
        let truth = true_barycenter(&clouds, &r.weights, &opts)?;
        true_seconds += start.elapsed().as_secs_f64();
        if let Some(n) = truth.notice.clone() {
            notices.push(n);
        }
        let spread = match spreads.get(&r.source_indices) {
            Some(s) => *s,
            None => {
                let s = pushforward_spread(&set, &r.source_indices)?;
                spreads.insert(r.source_indices.clone(), s);
                s
            }
        };
        deltas.push(relative_error_against(
            &r.cloud,
            &truth.measure,
            spread,
            clouds.len(),
        )?);
        truths.push(truth.measure);
    }

    let mut by_label: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (r, d) in results.iter().zip(&deltas) {
        by_label.entry(&r.label).or_default().push(*d);
    }
    let table: Vec<DeltaRow> = by_label
        .iter()
        .map(|(label, values)| DeltaRow::from_values(label, 0, values))
        .collect();

    let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
    let mut records = Vec::with_capacity(results.len());
    for ((r, d), truth) in results.iter().zip(&deltas).zip(&truths) {
        let k = counters.entry(&r.label).or_default();
        let name = format!("{}_{:03}.csv", file_stem(&r.label), k);
        *k += 1;
        write_point_cloud(&cfg.out.join("barycenters").join(&name), &r.cloud)?;
        if args.compare_true {
            write_point_cloud(&cfg.out.join("true_barycenters").join(&name), truth)?;
        }
        records.push(BarycenterRecord {
            label: &r.label,
            file: format!("barycenters/{name}"),
            source_indices: &r.source_indices,
            weights: &r.weights,
            delta: *d,
        });
    }
    write_json(
        &cfg.out.join("barycenters.json"),
        &BarycenterIndex {
            weights: args.weights.to_string(),
            barycenters: records,
            notices: &notices,
        },
    )?;
    write_atomic(&cfg.out.join("barycenter_delta.csv"), &delta_csv(&table))?;
    if args.compare_true {
        write_atomic(
            &cfg.out.join("timings_barycenter.csv"),
            &timing_csv(&[("all".into(), lot_seconds, true_seconds)]),
        )?;
    }
    Ok(BarycenterOutput {
        results,
        deltas,
        table,
        true_barycenters: truths,
        lot_seconds,
        true_seconds,
        notices,
    })
}

fn timing_csv(rows: &[(String, f64, f64)]) -> Vec<u8> {
    table_csv(
        &["scope", "lot_seconds", "true_seconds", "ratio"],
        rows.iter()
            .map(|(s, l, t)| vec![s.clone(), l.to_string(), t.to_string(), (l / t).to_string()])
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterateScope {
    /// One reference sequence for the whole dataset.
    Global,
    /// A separate reference sequence per class.
    Class,
}

impl FromStr for IterateScope {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "global" => Ok(IterateScope::Global),
            "class" => Ok(IterateScope::Class),
            other => Err(format!("unknown scope {other:?}; expected global or class")),
        }
    }
}

/// δ statistics per class and iteration of a reference-refinement run.
#[derive(Debug, Clone)]
pub struct RefinementRun {
    pub table: Vec<DeltaRow>,
    pub notices: Vec<Notice>,
    /// Embedding plus synthesis time at iteration 0.
    pub lot_seconds: f64,
    pub true_seconds: f64,
    pub records: Vec<LabeledEmbeddingSet>,
}

/// Embeds `data` against `initial` and `n_iterations` refinements of it, scoring the LOT
/// barycenters of each class under `weights_per_class` random weights at every iteration.
pub fn refinement_deltas(
    data: &LabeledCloudSet,
    initial: DiscreteMeasure,
    n_iterations: usize,
    opts: &EmbedOptions,
    weights_per_class: usize,
    seed: u64,
    true_seed: u64,
) -> Result<RefinementRun> {
    if weights_per_class == 0 {
        return Err(LotError::InvalidParameter(
            "need at least one weight vector".into(),
        ));
    }
    let classes = data.classes();
    let m = initial.len();
    let all: Vec<usize> = (0..data.len()).collect();
    let mut lot_seconds = 0.0;
    let mut true_seconds = 0.0;
    let mut notices = Vec::new();

    let mut reference = initial;
    let mut records = Vec::with_capacity(n_iterations + 1);
    let mut weights = Vec::with_capacity(classes.len());
    for j in 0..=n_iterations {
        let start = Instant::now();
        let set = embed_point_clouds_with(&reference, data, opts)?;
        if j == 0 {
            for c in &classes {
                let ws = random_weights(
                    weights_per_class,
                    data.indices_of(c).len(),
                    sub_seed(seed, &format!("weights:{c}")),
                )?;
                let idx = set.indices_of(c);
                generate_barycenters_general(set.rows().select(Axis(0), &idx).view(), &ws)?;
                weights.push(ws);
            }
            lot_seconds = start.elapsed().as_secs_f64();
        }
        if j < n_iterations {
            reference = set.pushforward_row(mean_row(set.rows(), &all).view())?;
        }
        records.push(set);
    }

    let opts_true = TrueBarycenterOptions::new(m, true_seed);
    let mut table = Vec::new();
    for (c, ws) in classes.iter().zip(&weights) {
        let idx = data.indices_of(c);
        let clouds: Vec<DiscreteMeasure> = idx.iter().map(|&i| data.clouds()[i].clone()).collect();
        let mut truths = Vec::with_capacity(ws.len());
        for w in ws {
            let start = Instant::now();
            let t = true_barycenter(&clouds, w, &opts_true)?;
            true_seconds += start.elapsed().as_secs_f64();
            if let Some(n) = t.notice {
                notices.push(n);
            }
            truths.push(t.measure);
        }
        for (j, set) in records.iter().enumerate() {
            let spread = pushforward_spread(set, &idx)?;
            let rows = generate_barycenters_general(set.rows().select(Axis(0), &idx).view(), ws)?;
            let values = rows
                .rows()
                .into_iter()
                .zip(&truths)
                .map(|(row, truth)| {
                    relative_error_against(&set.pushforward_row(row)?, truth, spread, idx.len())
                })
                .collect::<Result<Vec<_>>>()?;
            table.push(DeltaRow::from_values(c, j, &values));
        }
    }
    table.sort_by(|a, b| (&a.class, a.iteration).cmp(&(&b.class, b.iteration)));
    Ok(RefinementRun {
        table,
        notices,
        lot_seconds,
        true_seconds,
        records,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateArgs {
    pub n_iterations: usize,
    pub scope: IterateScope,
    /// Random weight vectors per class for the δ table.
    pub weights: usize,
}

/// Writes the iteration trace under `trace/` (or `trace/<class>/` per class) and the δ table to
/// `iterate_delta.csv`.
pub fn cmd_iterate(cfg: &PipelineConfig, args: &IterateArgs) -> Result<Vec<DeltaRow>> {
    let prep = prepare(cfg)?;
    let opts = cfg.embed_options();
    let groups: Vec<(Option<String>, LabeledCloudSet)> = match args.scope {
        IterateScope::Global => vec![(None, prep.data.clone())],
        IterateScope::Class => prep
            .data
            .classes()
            .into_iter()
            .map(|c| {
                let sub = prep.data.subset(&prep.data.indices_of(&c))?;
                Ok((Some(c), sub))
            })
            .collect::<Result<_>>()?,
    };
    let mut table = Vec::new();
    let mut notices = Vec::new();
    for (class, data) in groups {
        let initial = match args.scope {
            IterateScope::Global => prep.reference.clone(),
            IterateScope::Class => reference_for(cfg, &data)?,
        };
        let run = refinement_deltas(
            &data,
            initial,
            args.n_iterations,
            &opts,
            args.weights,
            sub_seed(cfg.seed, "iterate"),
            cfg.reference_seed(),
        )?;
        let dir = match &class {
            None => cfg.out.join("trace"),
            Some(c) => cfg.out.join("trace").join(file_stem(c)),
        };
        write_trace(&dir, &trace_of(&run)?)?;
        table.extend(run.table);
        notices.extend(run.notices);
    }
    table.sort_by(|a, b| (&a.class, a.iteration).cmp(&(&b.class, b.iteration)));
    write_atomic(&cfg.out.join("iterate_delta.csv"), &delta_csv(&table))?;
    write_json(&cfg.out.join("iterate_notices.json"), &notices)?;
    Ok(table)
}

fn trace_of(run: &RefinementRun) -> Result<crate::embedding::IterationTrace> {
    let iterations = run
        .records
        .iter()
        .map(|set| {
            let class_barycenters = set
                .classes()
                .into_iter()
                .map(|c| {
                    let row = mean_row(set.rows(), &set.indices_of(&c));
                    Ok((c, set.pushforward_row(row.view())?))
                })
                .collect::<Result<_>>()?;
            Ok(crate::embedding::IterationRecord {
                embeddings: set.clone(),
                class_barycenters,
            })
        })
        .collect::<Result<_>>()?;
    Ok(crate::embedding::IterationTrace { iterations })
}

/// Desk-scale fidelity and timing benchmark: per class, LOT barycenters against a class-fitted
/// Gaussian reference and its refinements versus true barycenters for the same weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub classes: usize,
    pub clouds_per_class: usize,
    pub points_per_cloud: usize,
    pub dim: usize,
    pub reference_points: usize,
    pub weights: usize,
    pub n_iterations: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            classes: 4,
            clouds_per_class: 10,
            points_per_cloud: 200,
            dim: 2,
            reference_points: 300,
            weights: 10,
            n_iterations: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub delta: Vec<DeltaRow>,
    /// `(class, lot_seconds, true_seconds)`.
    pub timings: Vec<(String, f64, f64)>,
    pub notices: Vec<Notice>,
}

impl BenchReport {
    pub fn total_lot_seconds(&self) -> f64 {
        self.timings.iter().map(|t| t.1).sum()
    }

    pub fn total_true_seconds(&self) -> f64 {
        self.timings.iter().map(|t| t.2).sum()
    }
}

/// Translate families for every class.
pub fn bench_dataset(spec: &BenchSpec, seed: u64) -> Result<LabeledCloudSet> {
    synthetic_dataset(&SyntheticSpec {
        classes: spec.classes,
        clouds_per_class: spec.clouds_per_class,
        points_per_cloud: spec.points_per_cloud,
        dim: spec.dim,
        seed: sub_seed(seed, "bench-data"),
        translate_only: true,
    })
}

pub fn run_bench(
    data: &LabeledCloudSet,
    reference_points: usize,
    spec: &BenchSpec,
    opts: &EmbedOptions,
    seed: u64,
) -> Result<BenchReport> {
    let ref_seed = sub_seed(seed, "reference");
    let mut delta = Vec::new();
    let mut timings = Vec::new();
    let mut notices = Vec::new();
    for c in data.classes() {
        let sub = data.subset(&data.indices_of(&c))?;
        let start = Instant::now();
        let initial = fitted_gaussian_reference(sub.clouds(), reference_points, ref_seed)?;
        let fit_seconds = start.elapsed().as_secs_f64();
        let run = refinement_deltas(
            &sub,
            initial,
            spec.n_iterations,
            opts,
            spec.weights,
            sub_seed(seed, "bench"),
            ref_seed,
        )?;
        timings.push((c, fit_seconds + run.lot_seconds, run.true_seconds));
        delta.extend(run.table);
        notices.extend(run.notices);
    }
    Ok(BenchReport {
        delta,
        timings,
        notices,
    })
}

/// Runs the benchmark on the configured dataset, or on [`bench_dataset`] when there is none.
/// Writes `bench_delta.csv`, `bench.json` and `timings_bench.csv`.
pub fn cmd_bench(
    spec: &BenchSpec,
    cfg: Option<&PipelineConfig>,
    seed: u64,
    out: &Path,
) -> Result<BenchReport> {
    let (data, m, opts) = match cfg {
        Some(cfg) => {
            let m = cfg
                .reference_points()
                .ok_or_else(|| LotError::Config("bench needs a gaussian reference".into()))?;
            (prepare(cfg)?.data, m, cfg.embed_options())
        }
        None => (
            bench_dataset(spec, seed)?,
            spec.reference_points,
            EmbedOptions::new(Method::Exact, true),
        ),
    };
    let report = run_bench(&data, m, spec, &opts, seed)?;
    write_atomic(&out.join("bench_delta.csv"), &delta_csv(&report.delta))?;
    write_json(&out.join("bench.json"), spec)?;
    let mut rows = report.timings.clone();
    rows.push((
        "total".into(),
        report.total_lot_seconds(),
        report.total_true_seconds(),
    ));
    write_atomic(&out.join("timings_bench.csv"), &timing_csv(&rows))?;
    Ok(report)
}
