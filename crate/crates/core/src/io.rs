//! Text formats: point-cloud CSV, dataset manifests, embedding sets, reduced coordinates and
//! iteration traces. Every write goes through a temporary file and a rename.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::embedding::{IterationTrace, LabeledEmbeddingSet};
use crate::error::{LotError, Result};
use crate::measures::{DiscreteMeasure, LabeledCloudSet};

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| LotError::io(dir, e))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| LotError::format(path, "not a file path"))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| LotError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| LotError::io(path, e))
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| LotError::io(path, e))
}

fn csv_bytes(header: Option<&[String]>, records: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    if let Some(h) = header {
        w.write_record(h).expect("writing to memory");
    }
    for r in records {
        w.write_record(&r).expect("writing to memory");
    }
    w.into_inner().expect("flushing to memory")
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| LotError::format(path, format!("line {line}: not a number: {field:?}")))
}

/// Header `x1..xd` plus `mass` when the masses are not uniform.
pub fn point_cloud_csv(measure: &DiscreteMeasure) -> Vec<u8> {
    let d = measure.dim();
    let with_mass = !measure.is_uniform();
    let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    if with_mass {
        header.push("mass".into());
    }
    let records = measure
        .points()
        .rows()
        .into_iter()
        .zip(measure.masses().iter())
        .map(|(row, &w)| {
            let mut r: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            if with_mass {
                r.push(w.to_string());
            }
            r
        })
        .collect::<Vec<_>>();
    csv_bytes(Some(&header), records)
}

pub fn write_point_cloud(path: &Path, measure: &DiscreteMeasure) -> Result<()> {
    write_atomic(path, &point_cloud_csv(measure))
}

/// Reads `x1..xd[,mass]`. Without a mass column the masses are uniform.
pub fn read_point_cloud(path: &Path) -> Result<DiscreteMeasure> {
    let text = read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| LotError::format(path, e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    let has_mass = names.last() == Some(&"mass");
    let d = names.len() - usize::from(has_mass);
    for (k, name) in names[..d].iter().enumerate() {
        if *name != format!("x{}", k + 1) {
            return Err(LotError::format(
                path,
                format!("expected column x{}, found {name:?}", k + 1),
            ));
        }
    }
    if d == 0 {
        return Err(LotError::format(path, "no coordinate columns"));
    }
    let mut coords = Vec::new();
    let mut masses = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| LotError::format(path, e.to_string()))?;
        let line = i + 2;
        if rec.len() != names.len() {
            return Err(LotError::format(
                path,
                format!(
                    "line {line}: expected {} fields, found {}",
                    names.len(),
                    rec.len()
                ),
            ));
        }
        for k in 0..d {
            coords.push(parse_f64(path, line, &rec[k])?);
        }
        if has_mass {
            masses.push(parse_f64(path, line, &rec[d])?);
        }
    }
    let n = coords.len() / d;
    let points = Array2::from_shape_vec((n, d), coords).expect("n * d values");
    let measure = if has_mass {
        DiscreteMeasure::new(points, Array1::from(masses))
    } else {
        DiscreteMeasure::uniform(points)
    };
    measure.map_err(|e| LotError::format(path, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory unless absolute.
    pub path: PathBuf,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub clouds: Vec<ManifestEntry>,
}

pub fn read_manifest(path: &Path) -> Result<LabeledCloudSet> {
    let text = read_to_string(path)?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| LotError::format(path, e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut clouds = Vec::with_capacity(manifest.clouds.len());
    let mut labels = Vec::with_capacity(manifest.clouds.len());
    for entry in manifest.clouds {
        clouds.push(read_point_cloud(&base.join(&entry.path))?);
        labels.push(entry.label);
    }
    LabeledCloudSet::new(clouds, labels)
}

/// Writes `clouds/cloud_NNNN.csv` under `dir` and a `manifest.json` naming them.
pub fn write_dataset(dir: &Path, set: &LabeledCloudSet) -> Result<PathBuf> {
    let mut entries = Vec::with_capacity(set.len());
    for (k, (cloud, label)) in set.clouds().iter().zip(set.labels()).enumerate() {
        let rel = PathBuf::from("clouds").join(format!("cloud_{k:04}.csv"));
        write_point_cloud(&dir.join(&rel), cloud)?;
        entries.push(ManifestEntry {
            path: rel,
            label: label.clone(),
        });
    }
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&Manifest { clouds: entries }).expect("serializes");
    write_atomic(&manifest_path, json.as_bytes())?;
    Ok(manifest_path)
}

fn embedding_header(m: usize, d: usize, normalized: bool, hash: &str) -> String {
    format!("# m={m},d={d},normalized={normalized},reference_hash={hash}\n")
}

/// A metadata comment line, then one row of `m * d` values and a label per embedding.
pub fn embeddings_csv(set: &LabeledEmbeddingSet) -> Vec<u8> {
    let reference = set.reference();
    let mut out = embedding_header(
        reference.len(),
        reference.dim(),
        set.normalized(),
        &set.reference_id(),
    )
    .into_bytes();
    let records = set
        .rows()
        .rows()
        .into_iter()
        .zip(set.labels())
        .map(|(row, label)| {
            let mut r: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            r.push(label.clone());
            r
        })
        .collect::<Vec<_>>();
    out.extend(csv_bytes(None, records));
    out
}

pub fn write_embeddings(path: &Path, set: &LabeledEmbeddingSet) -> Result<()> {
    write_atomic(path, &embeddings_csv(set))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingHeader {
    pub m: usize,
    pub d: usize,
    pub normalized: bool,
    pub reference_hash: String,
}

fn parse_embedding_header(path: &Path, line: &str) -> Result<EmbeddingHeader> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| LotError::format(path, "missing metadata comment line"))?;
    let mut m = None;
    let mut d = None;
    let mut normalized = None;
    let mut hash = None;
    for part in body.trim().split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| LotError::format(path, format!("bad metadata field {part:?}")))?;
        let bad = || LotError::format(path, format!("bad value for {k}: {v:?}"));
        match k.trim() {
            "m" => m = Some(v.parse().map_err(|_| bad())?),
            "d" => d = Some(v.parse().map_err(|_| bad())?),
            "normalized" => normalized = Some(v.parse().map_err(|_| bad())?),
            "reference_hash" => hash = Some(v.to_string()),
            _ => {}
        }
    }
    match (m, d, normalized, hash) {
        (Some(m), Some(d), Some(normalized), Some(reference_hash)) => Ok(EmbeddingHeader {
            m,
            d,
            normalized,
            reference_hash,
        }),
        _ => Err(LotError::format(
            path,
            "metadata needs m, d, normalized and reference_hash",
        )),
    }
}

/// Reads an embedding file written against `reference`; the stored hash must match it.
pub fn read_embeddings(path: &Path, reference: &DiscreteMeasure) -> Result<LabeledEmbeddingSet> {
    let text = read_to_string(path)?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    let header = parse_embedding_header(path, first)?;
    let actual = reference.content_hash();
    if header.reference_hash != actual {
        return Err(LotError::ReferenceMismatch(header.reference_hash, actual));
    }
    if header.m != reference.len() || header.d != reference.dim() {
        return Err(LotError::format(path, "shape does not match the reference"));
    }
    let width = header.m * header.d;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(rest.as_bytes());
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| LotError::format(path, e.to_string()))?;
        let line = i + 2;
        if rec.len() != width + 1 {
            return Err(LotError::format(
                path,
                format!(
                    "line {line}: expected {} fields, found {}",
                    width + 1,
                    rec.len()
                ),
            ));
        }
        for k in 0..width {
            values.push(parse_f64(path, line, &rec[k])?);
        }
        labels.push(rec[width].to_string());
    }
    let rows = Array2::from_shape_vec((labels.len(), width), values).expect("rows * width values");
    LabeledEmbeddingSet::new(rows, labels, reference.clone(), header.normalized, vec![])
}

/// `component_1..component_k,label`.
pub fn coordinates_csv(coords: ArrayView2<'_, f64>, labels: &[String]) -> Vec<u8> {
    let mut header: Vec<String> = (1..=coords.ncols())
        .map(|k| format!("component_{k}"))
        .collect();
    header.push("label".into());
    let records = coords
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, label)| {
            let mut r: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            r.push(label.clone());
            r
        })
        .collect::<Vec<_>>();
    csv_bytes(Some(&header), records)
}

/// Any table of strings, header first.
pub fn table_csv(header: &[&str], records: Vec<Vec<String>>) -> Vec<u8> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    csv_bytes(Some(&header), records)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value).expect("serializes");
    json.push('\n');
    write_atomic(path, json.as_bytes())
}

/// File-name-safe form of a label.
pub fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceIndexEntry {
    pub iteration: usize,
    pub reference: String,
    pub embeddings: String,
    pub transport_costs: String,
    pub barycenters: Vec<String>,
    pub reference_hash: String,
}

/// `iteration_{j}/` holding the reference, embeddings, per-cloud transport costs and class
/// barycenters, plus `index.json` listing them.
pub fn write_trace(dir: &Path, trace: &IterationTrace) -> Result<Vec<TraceIndexEntry>> {
    let mut index = Vec::with_capacity(trace.iterations.len());
    for (j, record) in trace.iterations.iter().enumerate() {
        let sub = format!("iteration_{j}");
        let reference = format!("{sub}/reference.csv");
        let embeddings = format!("{sub}/embeddings.csv");
        let costs = format!("{sub}/transport_costs.csv");
        write_point_cloud(&dir.join(&reference), record.reference())?;
        write_embeddings(&dir.join(&embeddings), &record.embeddings)?;
        let cost_rows = record
            .transport_costs()
            .iter()
            .zip(record.embeddings.labels())
            .enumerate()
            .map(|(k, (c, l))| vec![k.to_string(), l.clone(), c.to_string()])
            .collect();
        write_atomic(
            &dir.join(&costs),
            &table_csv(&["cloud", "label", "cost"], cost_rows),
        )?;
        let mut barycenters = Vec::new();
        for (label, cloud) in &record.class_barycenters {
            let rel = format!("{sub}/barycenter_{}.csv", file_stem(label));
            write_point_cloud(&dir.join(&rel), cloud)?;
            barycenters.push(rel);
        }
        index.push(TraceIndexEntry {
            iteration: j,
            reference,
            embeddings,
            transport_costs: costs,
            barycenters,
            reference_hash: record.embeddings.reference_id(),
        });
    }
    write_json(&dir.join("index.json"), &index)?;
    Ok(index)
}
