//! Barycenters as convex combinations of embeddings, the free-support Wasserstein barycenter used
//! to judge them, and the relative error between the two.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::LabeledEmbeddingSet;
use crate::error::{LotError, Notice, Result};
use crate::measures::{fitted_gaussian_reference, DiscreteMeasure};
use crate::rng;
use crate::transport::{barycentric_projection, exact_plan, w2_distance, Method, PROJECTION_EPS};

pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// The fixed three-member weight table. It has 21 rows.
pub const WEIGHTS_FIXED: [[f64; 3]; 21] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.9, 0.1, 0.0],
    [0.9, 0.0, 0.1],
    [0.1, 0.9, 0.0],
    [0.0, 0.9, 0.1],
    [0.1, 0.0, 0.9],
    [0.0, 0.1, 0.9],
    [0.6, 0.2, 0.2],
    [0.6, 0.3, 0.1],
    [0.6, 0.0, 0.4],
    [0.2, 0.6, 0.2],
    [0.3, 0.6, 0.1],
    [0.0, 0.6, 0.4],
    [0.2, 0.2, 0.6],
    [0.3, 0.1, 0.6],
    [0.0, 0.4, 0.6],
    [0.2, 0.4, 0.4],
    [0.4, 0.2, 0.4],
    [0.4, 0.4, 0.2],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Nonnegative, finite, summing to 1 within `WEIGHT_SUM_TOL`.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(LotError::InvalidWeights("empty weight vector".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(LotError::InvalidWeights(format!(
                "weights must be finite and nonnegative: {weights:?}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(LotError::InvalidWeights(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(WeightVector(weights))
    }

    /// Divides by the sum.
    pub fn normalized(raw: Vec<f64>) -> Result<Self> {
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(LotError::InvalidWeights(format!(
                "cannot normalize {raw:?}"
            )));
        }
        WeightVector::new(raw.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        WeightVector::new(vec![1.0 / n as f64; n])
            .or_else(|_| WeightVector::normalized(vec![1.0; n]))
    }

    /// Each entry uniform on `[0, 1)`, then divided by the sum.
    pub fn random(n: usize, rng: &mut impl Rng) -> Result<Self> {
        loop {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            if raw.iter().sum::<f64>() > 0.0 {
                return WeightVector::normalized(raw);
            }
        }
    }

    pub fn fixed() -> Vec<WeightVector> {
        WEIGHTS_FIXED
            .iter()
            .map(|row| WeightVector::new(row.to_vec()).expect("table rows sum to 1"))
            .collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = LotError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        WeightVector::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarycenterResult {
    pub embedding: Array1<f64>,
    pub cloud: DiscreteMeasure,
    pub weights: WeightVector,
    pub source_indices: Vec<usize>,
    /// Class label, or `a|b` for a pair.
    pub label: String,
}

fn combine(rows: ArrayView2<'_, f64>, indices: &[usize], weights: &WeightVector) -> Array1<f64> {
    let mut out = Array1::<f64>::zeros(rows.ncols());
    for (&i, &w) in indices.iter().zip(weights.as_slice()) {
        out.scaled_add(w, &rows.row(i));
    }
    out
}

fn result(
    set: &LabeledEmbeddingSet,
    indices: Vec<usize>,
    weights: WeightVector,
    label: String,
) -> Result<BarycenterResult> {
    let embedding = combine(set.rows(), &indices, &weights);
    let cloud = set.pushforward_row(embedding.view())?;
    Ok(BarycenterResult {
        embedding,
        cloud,
        weights,
        source_indices: indices,
        label,
    })
}

/// Which weights to use for within-class barycenters.
#[derive(Debug, Clone, PartialEq)]
pub enum WithinWeights {
    /// One barycenter per class, `1 / N_c` each.
    Uniform,
    /// One barycenter per vector per class; lengths must equal every class size.
    Given(Vec<WeightVector>),
    /// This many random vectors per class.
    Random(usize),
}

/// Barycenters of the members of each class, classes in sorted order.
pub fn generate_barycenters_within_class(
    set: &LabeledEmbeddingSet,
    weights: &WithinWeights,
    seed: u64,
) -> Result<Vec<BarycenterResult>> {
    let mut rng = rng::seeded(seed);
    let mut out = Vec::new();
    for label in set.classes() {
        let idx = set.indices_of(&label);
        let vectors = match weights {
            WithinWeights::Uniform => vec![WeightVector::uniform(idx.len())?],
            WithinWeights::Given(ws) => {
                if let Some(bad) = ws.iter().find(|w| w.len() != idx.len()) {
                    return Err(LotError::InvalidWeights(format!(
                        "class {label:?} has {} members but a weight vector has length {}",
                        idx.len(),
                        bad.len()
                    )));
                }
                ws.clone()
            }
            WithinWeights::Random(n) => (0..*n)
                .map(|_| WeightVector::random(idx.len(), &mut rng))
                .collect::<Result<_>>()?,
        };
        for w in vectors {
            out.push(result(set, idx.clone(), w, label.clone())?);
        }
    }
    Ok(out)
}

/// For each pair, one seeded uniform pick per class, combined with each weight vector
/// (default `[0.5, 0.5]`).
pub fn generate_barycenters_between_classes(
    set: &LabeledEmbeddingSet,
    class_pairs: &[(String, String)],
    weights: Option<&[WeightVector]>,
    seed: u64,
) -> Result<Vec<BarycenterResult>> {
    let default = [WeightVector::new(vec![0.5, 0.5])?];
    let weights = weights.unwrap_or(&default);
    if let Some(bad) = weights.iter().find(|w| w.len() != 2) {
        return Err(LotError::InvalidWeights(format!(
            "pair weights need length 2, got {}",
            bad.len()
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut out = Vec::new();
    for (a, b) in class_pairs {
        let mut pick = |label: &String| {
            let idx = set.indices_of(label);
            if idx.is_empty() {
                return Err(LotError::UnknownClass(label.clone()));
            }
            Ok(idx[rng.gen_range(0..idx.len())])
        };
        let reps = vec![pick(a)?, pick(b)?];
        for w in weights {
            out.push(result(set, reps.clone(), w.clone(), format!("{a}|{b}"))?);
        }
    }
    Ok(out)
}

/// Row `k` of the output is `weights[k] . rows`.
pub fn generate_barycenters_general(
    rows: ArrayView2<'_, f64>,
    weights: &[WeightVector],
) -> Result<Array2<f64>> {
    let all: Vec<usize> = (0..rows.nrows()).collect();
    let mut out = Array2::<f64>::zeros((weights.len(), rows.ncols()));
    for (k, w) in weights.iter().enumerate() {
        if w.len() != rows.nrows() {
            return Err(LotError::InvalidWeights(format!(
                "weight vector {k} has length {} for {} rows",
                w.len(),
                rows.nrows()
            )));
        }
        out.row_mut(k).assign(&combine(rows, &all, w));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueBarycenterOptions {
    pub support_size: usize,
    pub max_iters: usize,
    /// Stop when no support point moves farther than this. `None` means `1e-6` times the
    /// diagonal of the data's bounding box.
    pub tol: Option<f64>,
    pub seed: u64,
}

impl TrueBarycenterOptions {
    pub fn new(support_size: usize, seed: u64) -> Self {
        TrueBarycenterOptions {
            support_size,
            max_iters: 50,
            tol: None,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrueBarycenter {
    pub measure: DiscreteMeasure,
    /// Support updates performed.
    pub iterations: usize,
    /// `sum_i w_i W2^2(iterate, mu_i)` for the initial support and after every update.
    pub functional: Vec<f64>,
    pub notice: Option<Notice>,
}

fn bounding_diagonal(clouds: &[DiscreteMeasure]) -> f64 {
    let d = clouds[0].dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for c in clouds {
        for row in c.points().rows() {
            for k in 0..d {
                lo[k] = lo[k].min(row[k]);
                hi[k] = hi[k].max(row[k]);
            }
        }
    }
    lo.iter()
        .zip(&hi)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt()
}

/// Exact maps from `support` to every cloud, and the weighted transport cost.
fn maps_and_cost(
    support: &DiscreteMeasure,
    clouds: &[DiscreteMeasure],
    w: &WeightVector,
) -> Result<(Array2<f64>, f64)> {
    let solved: Vec<Result<(Array2<f64>, f64)>> = clouds
        .par_iter()
        .map(|c| {
            let plan = exact_plan(support, c)?;
            let map = barycentric_projection(&plan, c.points(), PROJECTION_EPS)?;
            Ok((map, plan.objective()))
        })
        .collect();
    let mut next = Array2::<f64>::zeros(support.points().dim());
    let mut cost = 0.0;
    for (i, (r, &wi)) in solved.into_iter().zip(w.as_slice()).enumerate() {
        let (map, obj) = r.map_err(|e| e.at_cloud(i))?;
        next.scaled_add(wi, &map);
        cost += wi * obj;
    }
    Ok((next, cost))
}

/// Free-support fixed point `X <- sum_i w_i T_i(X)`, where `T_i` is the barycentric projection of
/// the exact plan from the uniform measure on `X` to cloud `i`. Starts from the same fitted
/// Gaussian that the reference refinement starts from.
pub fn true_barycenter(
    clouds: &[DiscreteMeasure],
    w: &WeightVector,
    opts: &TrueBarycenterOptions,
) -> Result<TrueBarycenter> {
    if clouds.is_empty() {
        return Err(LotError::InvalidDataset("no clouds".into()));
    }
    if w.len() != clouds.len() {
        return Err(LotError::InvalidWeights(format!(
            "{} weights for {} clouds",
            w.len(),
            clouds.len()
        )));
    }
    let d = clouds[0].dim();
    if let Some(c) = clouds.iter().find(|c| c.dim() != d) {
        return Err(LotError::DimensionError {
            expected: d,
            found: c.dim(),
        });
    }
    let tol = opts.tol.unwrap_or_else(|| 1e-6 * bounding_diagonal(clouds));
    let mut support = fitted_gaussian_reference(clouds, opts.support_size, opts.seed)?;
    let (mut next, cost) = maps_and_cost(&support, clouds, w)?;
    let mut functional = vec![cost];
    let mut iterations = 0;
    let mut displacement = f64::INFINITY;
    while iterations < opts.max_iters {
        displacement = (&next - &support.points())
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt())
            .fold(0.0, f64::max);
        support = DiscreteMeasure::uniform(next)?;
        iterations += 1;
        let (n, cost) = maps_and_cost(&support, clouds, w)?;
        next = n;
        functional.push(cost);
        if displacement <= tol {
            break;
        }
    }
    let notice = (displacement > tol).then_some(Notice::NotConverged {
        iterations,
        displacement,
    });
    Ok(TrueBarycenter {
        measure: support,
        iterations,
        functional,
        notice,
    })
}

/// Largest exact `W2` between pushforwards of the given rows.
pub fn pushforward_spread(set: &LabeledEmbeddingSet, indices: &[usize]) -> Result<f64> {
    let pushes = indices
        .iter()
        .map(|&i| set.pushforward_row(set.rows().row(i)))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize)> = (0..pushes.len())
        .flat_map(|i| (i + 1..pushes.len()).map(move |j| (i, j)))
        .collect();
    let dists: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| w2_distance(&pushes[i], &pushes[j], &Method::Exact))
        .collect();
    dists.into_iter().try_fold(0.0f64, |acc, d| Ok(acc.max(d?)))
}

/// Numerators at or below this, relative to the support scale, count as zero when the spread is 0.
const DEGENERATE_TOL: f64 = 1e-9;

/// `W2(LOT barycenter, true barycenter) / spread`, exact solver throughout.
pub fn relative_error_against(
    lot_barycenter: &DiscreteMeasure,
    true_barycenter: &DiscreteMeasure,
    spread: f64,
    family_size: usize,
) -> Result<f64> {
    if family_size < 2 {
        return Ok(0.0);
    }
    let numerator = w2_distance(lot_barycenter, true_barycenter, &Method::Exact)?;
    if spread > 0.0 {
        Ok(numerator / spread)
    } else if numerator <= DEGENERATE_TOL {
        Ok(0.0)
    } else {
        Err(LotError::DegenerateFamily(numerator))
    }
}

/// Relative error of the LOT barycenter of `indices` under `weights`, against the true barycenter
/// of the matching `clouds` with support the size of the reference.
pub fn relative_error(
    set: &LabeledEmbeddingSet,
    indices: &[usize],
    weights: &WeightVector,
    clouds: &[DiscreteMeasure],
    seed: u64,
) -> Result<f64> {
    if clouds.len() != indices.len() {
        return Err(LotError::InvalidDataset(format!(
            "{} clouds for {} embeddings",
            clouds.len(),
            indices.len()
        )));
    }
    let lot = set.pushforward_row(combine(set.rows(), indices, weights).view())?;
    let truth = true_barycenter(
        clouds,
        weights,
        &TrueBarycenterOptions::new(set.reference().len(), seed),
    )?;
    let spread = pushforward_spread(set, indices)?;
    relative_error_against(&lot, &truth.measure, spread, indices.len())
}

/// Coordinatewise mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Reshapes barycenter embeddings into an `N x (m d)` matrix.
pub fn stack_embeddings(results: &[BarycenterResult]) -> Array2<f64> {
    let views: Vec<_> = results.iter().map(|r| r.embedding.view()).collect();
    ndarray::stack(Axis(0), &views).unwrap_or_else(|_| Array2::zeros((0, 0)))
}
