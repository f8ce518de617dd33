//! Class balancing, PCA and LDA on flattened embeddings.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{LotError, Notice, Result};
use crate::rng;

/// Rows after random oversampling of minority classes.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedSet {
    pub rows: Array2<f64>,
    pub labels: Vec<String>,
    /// For each row, the index of the input row it copies.
    pub provenance: Vec<usize>,
}

/// Duplicates randomly chosen members of each class, with replacement, until every class has as
/// many rows as the largest. Input rows come first, in order; duplicates follow class by class in
/// sorted label order.
pub fn balance(rows: ArrayView2<'_, f64>, labels: &[String], seed: u64) -> Result<BalancedSet> {
    if rows.nrows() == 0 {
        return Err(LotError::InvalidDataset(
            "cannot balance an empty set".into(),
        ));
    }
    if rows.nrows() != labels.len() {
        return Err(LotError::InvalidDataset(format!(
            "{} rows but {} labels",
            rows.nrows(),
            labels.len()
        )));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l.as_str()).or_default().push(i);
    }
    let n_max = by_class.values().map(Vec::len).max().unwrap_or(0);
    let mut rng = rng::seeded(seed);
    let mut provenance: Vec<usize> = (0..rows.nrows()).collect();
    for members in by_class.values() {
        for _ in members.len()..n_max {
            provenance.push(members[rng.gen_range(0..members.len())]);
        }
    }
    Ok(BalancedSet {
        rows: rows.select(Axis(0), &provenance),
        labels: provenance.iter().map(|&i| labels[i].clone()).collect(),
        provenance,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// Principal axes as orthonormal rows, one per nonzero singular value.
    pub components: Array2<f64>,
    /// Nonincreasing.
    pub singular_values: Array1<f64>,
    /// Left singular vectors as columns, aligned with `components`.
    pub left_vectors: Array2<f64>,
    pub notices: Vec<Notice>,
}

impl PcaModel {
    /// Coordinates of `rows` on the first `k` axes.
    pub fn transform(&self, rows: ArrayView2<'_, f64>, k: usize) -> Result<Array2<f64>> {
        if rows.ncols() != self.mean.len() {
            return Err(LotError::DimensionError {
                expected: self.mean.len(),
                found: rows.ncols(),
            });
        }
        let k = k.min(self.components.nrows());
        let centered = &rows - &self.mean.view().insert_axis(Axis(0));
        Ok(centered.dot(&self.components.slice(ndarray::s![..k, ..]).t()))
    }

    /// Maps coordinates on the leading axes back to the input space.
    pub fn inverse_transform(&self, coords: ArrayView2<'_, f64>) -> Array2<f64> {
        let k = coords.ncols();
        coords.dot(&self.components.slice(ndarray::s![..k, ..]))
            + &self.mean.view().insert_axis(Axis(0))
    }

    /// Variance along each axis, `S_i^2 / (N - 1)`.
    pub fn explained_variance(&self) -> Array1<f64> {
        let n = self.left_vectors.nrows();
        let denom = (n.max(2) - 1) as f64;
        self.singular_values.mapv(|s| s * s / denom)
    }
}

fn to_dmatrix(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Flips `v` so its largest-magnitude entry is positive; returns whether it flipped.
fn orient(mut v: ndarray::ArrayViewMut1<'_, f64>) -> bool {
    let mut best = 0.0f64;
    for &x in v.iter() {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    if best < 0.0 {
        v.mapv_inplace(|x| -x);
        true
    } else {
        false
    }
}

/// Thin SVD of the centered rows, truncated to numerical rank.
fn fit_pca(rows: ArrayView2<'_, f64>) -> Result<PcaModel> {
    let (n, d) = rows.dim();
    if n < 2 {
        return Err(LotError::InvalidDataset(format!(
            "PCA needs at least 2 rows, got {n}"
        )));
    }
    let mean = rows.mean_axis(Axis(0)).expect("nonempty");
    let centered = &rows - &mean.view().insert_axis(Axis(0));
    if centered.iter().any(|x| !x.is_finite()) {
        return Err(LotError::InvalidDataset("non-finite entries".into()));
    }
    let svd = to_dmatrix(centered.view()).svd(true, true);
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let s_max = order.first().map_or(0.0, |&i| svd.singular_values[i]);
    let tol = n.max(d) as f64 * f64::EPSILON * s_max;
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| svd.singular_values[i] > tol && s_max > 0.0)
        .collect();
    let rank = kept.len();

    let mut components = Array2::<f64>::zeros((rank, d));
    let mut left_vectors = Array2::<f64>::zeros((n, rank));
    let mut singular_values = Array1::<f64>::zeros(rank);
    for (k, &i) in kept.iter().enumerate() {
        singular_values[k] = svd.singular_values[i];
        for j in 0..d {
            components[[k, j]] = vt[(i, j)];
        }
        for r in 0..n {
            left_vectors[[r, k]] = u[(r, i)];
        }
        if orient(components.row_mut(k)) {
            left_vectors.column_mut(k).mapv_inplace(|x| -x);
        }
    }
    let mut notices = Vec::new();
    let full = (n - 1).min(d);
    if rank < full {
        notices.push(Notice::RankDeficient {
            rank,
            components: full,
        });
    }
    Ok(PcaModel {
        mean,
        components,
        singular_values,
        left_vectors,
        notices,
    })
}

/// Balances, then fits PCA to the balanced rows.
pub fn pca_reduction(
    rows: ArrayView2<'_, f64>,
    labels: &[String],
    seed: u64,
) -> Result<(PcaModel, BalancedSet)> {
    let balanced = balance(rows, labels, seed)?;
    let model = fit_pca(balanced.rows.view())?;
    Ok((model, balanced))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    /// `D x k` with unit columns.
    pub projection: Array2<f64>,
    /// Sorted class labels, aligned with the rows of `class_means`.
    pub classes: Vec<String>,
    pub class_means: Array2<f64>,
    /// Orthonormal rows spanning the centered data; the scatter matrices are expressed in it.
    pub span: Array2<f64>,
    pub scatter_between: Array2<f64>,
    pub scatter_within: Array2<f64>,
    pub notices: Vec<Notice>,
}

impl LdaModel {
    pub fn transform(&self, rows: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.projection.nrows() {
            return Err(LotError::DimensionError {
                expected: self.projection.nrows(),
                found: rows.ncols(),
            });
        }
        Ok(rows.dot(&self.projection))
    }
}

fn scatter_matrices(
    z: ArrayView2<'_, f64>,
    labels: &[String],
    classes: &[String],
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let r = z.ncols();
    let overall = z.mean_axis(Axis(0)).expect("nonempty");
    let mut means = Array2::<f64>::zeros((classes.len(), r));
    let mut s_w = Array2::<f64>::zeros((r, r));
    let mut s_b = Array2::<f64>::zeros((r, r));
    for (c, label) in classes.iter().enumerate() {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| &labels[i] == label).collect();
        let members = z.select(Axis(0), &idx);
        let mu = members.mean_axis(Axis(0)).expect("class is nonempty");
        let centered = &members - &mu.view().insert_axis(Axis(0));
        s_w += &centered.t().dot(&centered);
        let diff = (&mu - &overall).insert_axis(Axis(1));
        s_b += &(diff.dot(&diff.t()) * idx.len() as f64);
        means.row_mut(c).assign(&mu);
    }
    (means, s_w, s_b)
}

/// Balances, then finds the leading solutions of `S_B w = lambda S_W w` within the span of the
/// centered data. Projected rows are the balanced rows times the projection.
pub fn lda_reduction(
    rows: ArrayView2<'_, f64>,
    labels: &[String],
    n_components: usize,
    seed: u64,
) -> Result<(LdaModel, Array2<f64>, Vec<String>)> {
    if n_components == 0 {
        return Err(LotError::InvalidParameter(
            "n_components must be at least 1".into(),
        ));
    }
    let balanced = balance(rows, labels, seed)?;
    let mut classes = balanced.labels.clone();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(LotError::InvalidDataset(format!(
            "LDA needs at least 2 classes, got {}",
            classes.len()
        )));
    }
    let d = rows.ncols();
    let mut notices = Vec::new();
    let k = n_components.min(classes.len() - 1);
    if k < n_components {
        notices.push(Notice::ComponentsClamped {
            requested: n_components,
            used: k,
        });
    }

    let pca = fit_pca(balanced.rows.view())?;
    let span = pca.components.clone();
    let r = span.nrows();
    if r == 0 {
        return Err(LotError::InvalidDataset("all rows are identical".into()));
    }
    let k = k.min(r);
    let centered = &balanced.rows - &pca.mean.view().insert_axis(Axis(0));
    let z = centered.dot(&span.t());
    let (means_z, s_w, s_b) = scatter_matrices(z.view(), &balanced.labels, &classes);

    let mut s_w_reg = to_dmatrix(s_w.view());
    let eig = SymmetricEigen::new(s_w_reg.clone());
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| {
            (lo.min(e), hi.max(e))
        });
    if !(lo > 1e-10 * hi) {
        let gamma = 1e-8 * s_w.diag().sum() / d as f64;
        let gamma = if gamma > 0.0 { gamma } else { 1e-12 };
        for i in 0..r {
            s_w_reg[(i, i)] += gamma;
        }
        notices.push(Notice::SingularWithin { gamma });
    }
    let chol = s_w_reg.cholesky().ok_or_else(|| {
        LotError::SolverFailure("within-class scatter is not positive definite".into())
    })?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| LotError::SolverFailure("singular Cholesky factor".into()))?;
    let mut whitened = &l_inv * to_dmatrix(s_b.view()) * l_inv.transpose();
    whitened = (&whitened + whitened.transpose()) * 0.5;
    let eig = SymmetricEigen::new(whitened);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let back = l_inv.transpose();
    let mut projection = Array2::<f64>::zeros((d, k));
    for (c, &i) in order.iter().take(k).enumerate() {
        let w_span = &back * eig.eigenvectors.column(i);
        let w_span = Array1::from_iter(w_span.iter().copied());
        let mut w = span.t().dot(&w_span);
        let norm = w.dot(&w).sqrt();
        w /= norm;
        orient(w.view_mut());
        projection.column_mut(c).assign(&w);
    }
    let class_means = means_z.dot(&span) + &pca.mean.view().insert_axis(Axis(0));
    let projected = balanced.rows.dot(&projection);
    let model = LdaModel {
        projection,
        classes,
        class_means,
        span,
        scatter_between: s_b,
        scatter_within: s_w,
        notices,
    };
    Ok((model, projected, balanced.labels))
}

/// Between-class over within-class scatter of the rows projected onto `w`.
pub fn fisher_ratio(rows: ArrayView2<'_, f64>, labels: &[String], w: ArrayView1<'_, f64>) -> f64 {
    let p = rows.dot(&w);
    let overall = p.mean().unwrap_or(0.0);
    let mut by_class: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (x, l) in p.iter().zip(labels) {
        by_class.entry(l.as_str()).or_default().push(*x);
    }
    let (mut between, mut within) = (0.0, 0.0);
    for values in by_class.values() {
        let mu = values.iter().sum::<f64>() / values.len() as f64;
        between += values.len() as f64 * (mu - overall).powi(2);
        within += values.iter().map(|x| (x - mu).powi(2)).sum::<f64>();
    }
    if within == 0.0 {
        if between == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        between / within
    }
}
