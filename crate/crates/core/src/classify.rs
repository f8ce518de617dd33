//! Nearest-neighbour and SVM classifiers, stratified cross-validation and model selection.
//!
//! The SVMs are one-vs-rest hinge-loss models trained by Pegasos-style stochastic subgradient
//! steps with step `1 / (lambda t)`, `lambda = 1 / (C N)`. Sample order comes from a seeded
//! shuffle of row indices each epoch.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LotError, Notice, Result};
use crate::rng;

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    Knn {
        k: usize,
    },
    LinearSvm {
        c: f64,
        epochs: usize,
        seed: u64,
    },
    /// `gamma = None` uses `1 / (D * var(X))` of the training rows.
    RbfSvm {
        c: f64,
        gamma: Option<f64>,
        epochs: usize,
        seed: u64,
    },
}

impl ClassifierSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ClassifierSpec::Knn { .. } => "KNN",
            ClassifierSpec::LinearSvm { .. } => "Linear SVM",
            ClassifierSpec::RbfSvm { .. } => "RBF SVM",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LotError::InvalidParameter(m.into()));
        match *self {
            ClassifierSpec::Knn { k } if k == 0 => bad("k must be at least 1"),
            ClassifierSpec::LinearSvm { c, epochs, .. }
            | ClassifierSpec::RbfSvm { c, epochs, .. }
                if !(c > 0.0) || epochs == 0 =>
            {
                bad("C must be positive and epochs at least 1")
            }
            ClassifierSpec::RbfSvm { gamma: Some(g), .. } if !(g > 0.0) => {
                bad("gamma must be positive")
            }
            _ => Ok(()),
        }
    }
}

/// KNN with k = 3, linear SVM, RBF SVM; selection ties resolve in this order.
pub fn default_roster(seed: u64) -> [ClassifierSpec; 3] {
    [
        ClassifierSpec::Knn { k: 3 },
        ClassifierSpec::LinearSvm {
            c: 1.0,
            epochs: 200,
            seed: rng::sub_seed(seed, "linear_svm"),
        },
        ClassifierSpec::RbfSvm {
            c: 1.0,
            gamma: None,
            epochs: 200,
            seed: rng::sub_seed(seed, "rbf_svm"),
        },
    ]
}

fn sorted_classes(labels: &[String]) -> Vec<String> {
    let mut c = labels.to_vec();
    c.sort();
    c.dedup();
    c
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Trains on the given rows and predicts a label for each test row.
pub fn fit_predict(
    spec: &ClassifierSpec,
    train_rows: ArrayView2<'_, f64>,
    train_labels: &[String],
    test_rows: ArrayView2<'_, f64>,
) -> Result<Vec<String>> {
    spec.validate()?;
    if train_rows.nrows() == 0 || train_rows.nrows() != train_labels.len() {
        return Err(LotError::InvalidTrainingSet(format!(
            "{} training rows with {} labels",
            train_rows.nrows(),
            train_labels.len()
        )));
    }
    if test_rows.ncols() != train_rows.ncols() {
        return Err(LotError::DimensionError {
            expected: train_rows.ncols(),
            found: test_rows.ncols(),
        });
    }
    let classes = sorted_classes(train_labels);
    if classes.len() == 1 {
        return Ok(vec![classes[0].clone(); test_rows.nrows()]);
    }
    match *spec {
        ClassifierSpec::Knn { k } => Ok(knn(k, train_rows, train_labels, test_rows)),
        ClassifierSpec::LinearSvm { c, epochs, seed } => {
            let scores = linear_svm(
                c,
                epochs,
                seed,
                train_rows,
                train_labels,
                &classes,
                test_rows,
            );
            Ok(argmax_labels(&scores, &classes))
        }
        ClassifierSpec::RbfSvm {
            c,
            gamma,
            epochs,
            seed,
        } => {
            let gamma = gamma.unwrap_or_else(|| scale_gamma(train_rows));
            let scores = rbf_svm(
                c,
                gamma,
                epochs,
                seed,
                train_rows,
                train_labels,
                &classes,
                test_rows,
            );
            Ok(argmax_labels(&scores, &classes))
        }
    }
}

fn knn(
    k: usize,
    train_rows: ArrayView2<'_, f64>,
    train_labels: &[String],
    test_rows: ArrayView2<'_, f64>,
) -> Vec<String> {
    let k = k.min(train_rows.nrows());
    test_rows
        .rows()
        .into_iter()
        .map(|x| {
            let mut neigh: Vec<(f64, &str)> = train_rows
                .rows()
                .into_iter()
                .zip(train_labels)
                .map(|(t, l)| (sq_dist(x, t), l.as_str()))
                .collect();
            neigh.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
            let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
            for (_, l) in &neigh[..k] {
                *votes.entry(l).or_default() += 1;
            }
            // BTreeMap iterates labels ascending, so the first maximum is the smallest label
            let mut best = ("", 0);
            for (l, v) in votes {
                if v > best.1 {
                    best = (l, v);
                }
            }
            best.0.to_string()
        })
        .collect()
}

fn argmax_labels(scores: &Array2<f64>, classes: &[String]) -> Vec<String> {
    scores
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &s) in row.iter().enumerate() {
                if s > row[best] {
                    best = c;
                }
            }
            classes[best].clone()
        })
        .collect()
}

fn epoch_orders(n: usize, epochs: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = rng::seeded(seed);
    (0..epochs)
        .map(|_| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx
        })
        .collect()
}

/// Per-feature standardization fitted on training rows, with a trailing constant for the bias.
fn standardized(rows: ArrayView2<'_, f64>, mean: &Array1<f64>, std: &Array1<f64>) -> Array2<f64> {
    let (n, d) = rows.dim();
    let mut out = Array2::<f64>::ones((n, d + 1));
    for i in 0..n {
        for j in 0..d {
            out[[i, j]] = (rows[[i, j]] - mean[j]) / std[j];
        }
    }
    out
}

fn linear_svm(
    c: f64,
    epochs: usize,
    seed: u64,
    train_rows: ArrayView2<'_, f64>,
    train_labels: &[String],
    classes: &[String],
    test_rows: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let n = train_rows.nrows();
    let mean = train_rows.mean_axis(Axis(0)).expect("nonempty");
    let std = train_rows
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 1e-12 { s } else { 1.0 });
    let x = standardized(train_rows, &mean, &std);
    let xt = standardized(test_rows, &mean, &std);
    let lambda = 1.0 / (c * n as f64);
    let orders = epoch_orders(n, epochs, seed);
    let mut scores = Array2::<f64>::zeros((test_rows.nrows(), classes.len()));
    for (ci, class) in classes.iter().enumerate() {
        let y: Vec<f64> = train_labels
            .iter()
            .map(|l| if l == class { 1.0 } else { -1.0 })
            .collect();
        let mut w = Array1::<f64>::zeros(x.ncols());
        let mut t = 0usize;
        for order in &orders {
            for &i in order {
                t += 1;
                let eta = 1.0 / (lambda * t as f64);
                let margin = y[i] * w.dot(&x.row(i));
                w *= 1.0 - eta * lambda;
                if margin < 1.0 {
                    w.scaled_add(eta * y[i], &x.row(i));
                }
            }
        }
        scores.column_mut(ci).assign(&xt.dot(&w));
    }
    scores
}

/// `1 / (D * var(X))` over all entries of the training rows.
fn scale_gamma(rows: ArrayView2<'_, f64>) -> f64 {
    let var = rows.var(0.0);
    let d = rows.ncols() as f64;
    if var > 0.0 {
        1.0 / (d * var)
    } else {
        1.0
    }
}

#[allow(clippy::too_many_arguments)]
fn rbf_svm(
    c: f64,
    gamma: f64,
    epochs: usize,
    seed: u64,
    train_rows: ArrayView2<'_, f64>,
    train_labels: &[String],
    classes: &[String],
    test_rows: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let n = train_rows.nrows();
    let kernel = |a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>| (-gamma * sq_dist(a, b)).exp();
    let gram = Array2::from_shape_fn((n, n), |(i, j)| {
        kernel(train_rows.row(i), train_rows.row(j))
    });
    let cross = Array2::from_shape_fn((test_rows.nrows(), n), |(i, j)| {
        kernel(test_rows.row(i), train_rows.row(j))
    });
    let lambda = 1.0 / (c * n as f64);
    let orders = epoch_orders(n, epochs, seed);
    let total_steps = (epochs * n) as f64;
    let mut scores = Array2::<f64>::zeros((test_rows.nrows(), classes.len()));
    for (ci, class) in classes.iter().enumerate() {
        let y: Array1<f64> = train_labels
            .iter()
            .map(|l| if l == class { 1.0 } else { -1.0 })
            .collect();
        // alpha_j counts margin violations of sample j; the decision function is
        // sum_j alpha_j y_j K(x_j, .) / (lambda t)
        let mut alpha = Array1::<f64>::zeros(n);
        let mut t = 0usize;
        for order in &orders {
            for &i in order {
                t += 1;
                let f: f64 = gram
                    .row(i)
                    .iter()
                    .zip(alpha.iter().zip(y.iter()))
                    .map(|(k, (a, yy))| k * a * yy)
                    .sum();
                if y[i] * f / (lambda * t as f64) < 1.0 {
                    alpha[i] += 1.0;
                }
            }
        }
        let coef = &alpha * &y / (lambda * total_steps);
        scores.column_mut(ci).assign(&cross.dot(&coef));
    }
    scores
}

/// Fold index of every row.
fn assign_folds(labels: &[String], folds: usize, seed: u64) -> (Vec<usize>, Option<Notice>) {
    let mut rng = rng::seeded(seed);
    let classes = sorted_classes(labels);
    let members: Vec<Vec<usize>> = classes
        .iter()
        .map(|c| (0..labels.len()).filter(|&i| &labels[i] == c).collect())
        .collect();
    let smallest = members.iter().map(Vec::len).min().unwrap_or(0);
    let mut fold_of = vec![0; labels.len()];
    let mut pointer = 0;
    if smallest < folds {
        let mut all: Vec<usize> = (0..labels.len()).collect();
        all.shuffle(&mut rng);
        for i in all {
            fold_of[i] = pointer;
            pointer = (pointer + 1) % folds;
        }
        return (
            fold_of,
            Some(Notice::NonStratified {
                smallest_class: smallest,
                folds,
            }),
        );
    }
    // dealing continues across classes, so fold sizes differ by at most one overall
    for mut m in members {
        m.shuffle(&mut rng);
        for i in m {
            fold_of[i] = pointer;
            pointer = (pointer + 1) % folds;
        }
    }
    (fold_of, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub fold_accuracies: Vec<f64>,
    pub fold_sizes: Vec<usize>,
    pub notices: Vec<Notice>,
}

impl CrossValidation {
    pub fn mean_accuracy(&self) -> f64 {
        self.fold_accuracies.iter().sum::<f64>() / self.fold_accuracies.len() as f64
    }
}

pub fn cross_validate(
    spec: &ClassifierSpec,
    rows: ArrayView2<'_, f64>,
    labels: &[String],
    folds: usize,
    seed: u64,
) -> Result<CrossValidation> {
    if folds < 2 {
        return Err(LotError::InvalidParameter(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if rows.nrows() != labels.len() || rows.nrows() < folds {
        return Err(LotError::InvalidTrainingSet(format!(
            "{} rows cannot fill {folds} folds",
            rows.nrows()
        )));
    }
    let (fold_of, notice) = assign_folds(labels, folds, seed);
    let results: Vec<Result<(f64, usize)>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] != f).collect();
            let test: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] == f).collect();
            let train_labels: Vec<String> = train.iter().map(|&i| labels[i].clone()).collect();
            let predicted = fit_predict(
                spec,
                rows.select(Axis(0), &train).view(),
                &train_labels,
                rows.select(Axis(0), &test).view(),
            )?;
            let correct = test
                .iter()
                .zip(&predicted)
                .filter(|(&i, p)| &labels[i] == *p)
                .count();
            Ok((correct as f64 / test.len() as f64, test.len()))
        })
        .collect();
    let mut fold_accuracies = Vec::with_capacity(folds);
    let mut fold_sizes = Vec::with_capacity(folds);
    for r in results {
        let (acc, size) = r?;
        fold_accuracies.push(acc);
        fold_sizes.push(size);
    }
    Ok(CrossValidation {
        fold_accuracies,
        fold_sizes,
        notices: notice.into_iter().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestMetrics {
    pub accuracy: f64,
    pub per_class: Vec<ClassScore>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Rows are true classes and columns predicted classes, both in `classes` order.
    pub classes: Vec<String>,
    pub confusion: Vec<Vec<usize>>,
}

impl TestMetrics {
    pub fn compute(truth: &[String], predicted: &[String], classes: &[String]) -> Self {
        let index: BTreeMap<&str, usize> = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let k = classes.len();
        let mut confusion = vec![vec![0usize; k]; k];
        for (t, p) in truth.iter().zip(predicted) {
            confusion[index[t.as_str()]][index[p.as_str()]] += 1;
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let per_class: Vec<ClassScore> = (0..k)
            .map(|c| {
                let tp = confusion[c][c];
                let predicted_c: usize = (0..k).map(|r| confusion[r][c]).sum();
                let support: usize = confusion[c].iter().sum();
                let precision = ratio(tp, predicted_c);
                let recall = ratio(tp, support);
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                ClassScore {
                    label: classes[c].clone(),
                    precision,
                    recall,
                    f1,
                    support,
                }
            })
            .collect();
        let mean = |f: fn(&ClassScore) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
        let correct = truth.iter().zip(predicted).filter(|(a, b)| a == b).count();
        TestMetrics {
            accuracy: ratio(correct, truth.len()),
            macro_precision: mean(|s| s.precision),
            macro_recall: mean(|s| s.recall),
            macro_f1: mean(|s| s.f1),
            per_class,
            classes: classes.to_vec(),
            confusion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub name: String,
    pub spec: ClassifierSpec,
    pub fold_accuracies: Vec<f64>,
    pub mean_cv_accuracy: f64,
    pub predictions: Vec<String>,
    /// `None` when the test split is empty.
    pub test: Option<TestMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub models: Vec<ModelReport>,
    pub selected: String,
    pub test_labels: Vec<String>,
    pub notices: Vec<Notice>,
}

impl EvaluationReport {
    pub fn selected_model(&self) -> &ModelReport {
        self.models
            .iter()
            .find(|m| m.name == self.selected)
            .expect("selected model is in the roster")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text summary: one line per model, then the selected model's per-class scores.
    pub fn to_table(&self) -> String {
        let fmt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:>8} {:>8}", "Model", "CV", "Test");
        for m in &self.models {
            let _ = writeln!(
                out,
                "{:<12} {:>8} {:>8}",
                m.name,
                fmt(Some(m.mean_cv_accuracy)),
                fmt(m.test.as_ref().map(|t| t.accuracy))
            );
        }
        let _ = writeln!(out, "\nselected: {}", self.selected);
        if let Some(t) = &self.selected_model().test {
            let _ = writeln!(
                out,
                "\n{:<16} {:>9} {:>9} {:>9} {:>9}",
                "Class", "Precision", "Recall", "F1", "Support"
            );
            for s in &t.per_class {
                let _ = writeln!(
                    out,
                    "{:<16} {:>9.2} {:>9.2} {:>9.2} {:>9}",
                    s.label, s.precision, s.recall, s.f1, s.support
                );
            }
            let _ = writeln!(
                out,
                "{:<16} {:>9.2} {:>9.2} {:>9.2} {:>9}",
                "macro avg",
                t.macro_precision,
                t.macro_recall,
                t.macro_f1,
                t.per_class.iter().map(|s| s.support).sum::<usize>()
            );
        }
        out
    }
}

/// Cross-validates the default roster on the training rows, refits each model on all of them,
/// scores the test rows, and selects the model with the best mean CV accuracy.
pub fn get_best_classifier(
    train_rows: ArrayView2<'_, f64>,
    train_labels: &[String],
    test_rows: ArrayView2<'_, f64>,
    test_labels: &[String],
    seed: u64,
) -> Result<EvaluationReport> {
    let classes = sorted_classes(train_labels);
    if classes.len() < 2 {
        return Err(LotError::InvalidTrainingSet(format!(
            "need at least 2 classes, got {}",
            classes.len()
        )));
    }
    if train_rows.nrows() < 2 {
        return Err(LotError::InvalidTrainingSet(
            "need at least 2 training rows".into(),
        ));
    }
    if test_rows.nrows() != test_labels.len() {
        return Err(LotError::InvalidDataset(format!(
            "{} test rows but {} labels",
            test_rows.nrows(),
            test_labels.len()
        )));
    }
    let mut notices = Vec::new();
    let folds = DEFAULT_FOLDS.min(train_rows.nrows());
    if folds < DEFAULT_FOLDS {
        notices.push(Notice::FoldsReduced {
            requested: DEFAULT_FOLDS,
            used: folds,
        });
    }
    if test_rows.nrows() == 0 {
        notices.push(Notice::EmptyTestSplit);
    }
    let mut all_classes = classes.clone();
    all_classes.extend(test_labels.iter().cloned());
    let all_classes = sorted_classes(&all_classes);
    let fold_seed = rng::sub_seed(seed, "folds");
    let roster = default_roster(seed);
    let results: Vec<Result<(ModelReport, Vec<Notice>)>> = roster
        .par_iter()
        .map(|spec| {
            let cv = cross_validate(spec, train_rows, train_labels, folds, fold_seed)?;
            let predictions = fit_predict(spec, train_rows, train_labels, test_rows)?;
            let test = (!test_labels.is_empty())
                .then(|| TestMetrics::compute(test_labels, &predictions, &all_classes));
            Ok((
                ModelReport {
                    name: spec.name().to_string(),
                    spec: *spec,
                    mean_cv_accuracy: cv.mean_accuracy(),
                    fold_accuracies: cv.fold_accuracies,
                    predictions,
                    test,
                },
                cv.notices,
            ))
        })
        .collect();
    let mut models = Vec::with_capacity(roster.len());
    for r in results {
        let (model, cv_notices) = r?;
        for n in cv_notices {
            if !notices.contains(&n) {
                notices.push(n);
            }
        }
        models.push(model);
    }
    let mut selected = 0;
    for (i, m) in models.iter().enumerate() {
        if m.mean_cv_accuracy > models[selected].mean_cv_accuracy {
            selected = i;
        }
    }
    Ok(EvaluationReport {
        selected: models[selected].name.clone(),
        models,
        test_labels: test_labels.to_vec(),
        notices,
    })
}

/// Stratified train/test split: each class contributes `round(test_fraction * n_c)` rows to the
/// test side, chosen by a seeded shuffle; both sides keep input order.
pub fn stratified_split(
    labels: &[String],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(LotError::InvalidParameter(format!(
            "test fraction must lie in [0, 1), got {test_fraction}"
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut is_test = vec![false; labels.len()];
    for c in sorted_classes(labels) {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        let n_test =
            ((test_fraction * members.len() as f64).round() as usize).min(members.len() - 1);
        for &i in &members[..n_test] {
            is_test[i] = true;
        }
    }
    let train = (0..labels.len()).filter(|&i| !is_test[i]).collect();
    let test = (0..labels.len()).filter(|&i| is_test[i]).collect();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn blobs(
        rng: &mut ChaCha8Rng,
        centers: &[(f64, f64, &str)],
        per: usize,
        noise: f64,
    ) -> (Array2<f64>, Vec<String>) {
        let mut rows = Array2::<f64>::zeros((centers.len() * per, 2));
        let mut labels = Vec::new();
        for (c, &(x, y, l)) in centers.iter().enumerate() {
            for k in 0..per {
                let z0: f64 = rng.sample(StandardNormal);
                let z1: f64 = rng.sample(StandardNormal);
                rows[[c * per + k, 0]] = x + noise * z0;
                rows[[c * per + k, 1]] = y + noise * z1;
                labels.push(l.to_string());
            }
        }
        (rows, labels)
    }

    fn accuracy(pred: &[String], truth: &[String]) -> f64 {
        pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
    }

    #[test]
    fn separated_classes_are_perfect_for_every_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let centers = [(0.0, 0.0, "a"), (10.0, 0.0, "b")];
        let (train, tl) = blobs(&mut rng, &centers, 20, 0.1);
        let (test, sl) = blobs(&mut rng, &centers, 10, 0.1);
        for spec in default_roster(3) {
            let pred = fit_predict(&spec, train.view(), &tl, test.view()).unwrap();
            assert_eq!(accuracy(&pred, &sl), 1.0, "{}", spec.name());
        }
    }

    #[test]
    fn one_neighbour_returns_the_matching_label() {
        let train = ndarray::array![[0.0, 0.0], [1.0, 1.0], [5.0, 5.0]];
        let labels = vec!["x".to_string(), "y".into(), "z".into()];
        let pred = fit_predict(
            &ClassifierSpec::Knn { k: 1 },
            train.view(),
            &labels,
            train.slice(ndarray::s![1..2, ..]),
        )
        .unwrap();
        assert_eq!(pred, vec!["y".to_string()]);
    }

    #[test]
    fn knn_ties_go_to_the_smallest_label() {
        let train = ndarray::array![[-1.0], [1.0]];
        let labels = vec!["b".to_string(), "a".into()];
        let pred = fit_predict(
            &ClassifierSpec::Knn { k: 2 },
            train.view(),
            &labels,
            ndarray::array![[0.0]].view(),
        )
        .unwrap();
        assert_eq!(pred, vec!["a".to_string()]);
    }

    #[test]
    fn xor_needs_the_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let centers = [
            (1.0, 1.0, "p"),
            (-1.0, -1.0, "p"),
            (1.0, -1.0, "n"),
            (-1.0, 1.0, "n"),
        ];
        let (train, tl) = blobs(&mut rng, &centers, 30, 0.2);
        let (test, sl) = blobs(&mut rng, &centers, 30, 0.2);
        let [_, linear, rbf] = default_roster(4);
        let acc_rbf = accuracy(
            &fit_predict(&rbf, train.view(), &tl, test.view()).unwrap(),
            &sl,
        );
        let acc_lin = accuracy(
            &fit_predict(&linear, train.view(), &tl, test.view()).unwrap(),
            &sl,
        );
        assert!(acc_rbf >= 0.95, "rbf {acc_rbf}");
        assert!(acc_lin <= 0.6, "linear {acc_lin}");
    }

    #[test]
    fn stratified_fold_sizes() {
        let labels: Vec<String> = ["a", "b", "c", "d"]
            .iter()
            .flat_map(|l| std::iter::repeat(l.to_string()).take(27))
            .collect();
        let (fold_of, notice) = assign_folds(&labels, 5, 0);
        assert!(notice.is_none());
        let mut sizes = vec![0; 5];
        for f in &fold_of {
            sizes[*f] += 1;
        }
        assert_eq!(sizes, vec![22, 22, 22, 21, 21]);
        for c in ["a", "b", "c", "d"] {
            for f in 0..5 {
                let n = (0..108)
                    .filter(|&i| labels[i] == c && fold_of[i] == f)
                    .count();
                assert!((n as f64 - 27.0 / 5.0).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn small_classes_degrade_to_unstratified_folds() {
        let labels: Vec<String> = vec![
            "a".into(),
            "a".into(),
            "b".into(),
            "b".into(),
            "b".into(),
            "b".into(),
        ];
        let (_, notice) = assign_folds(&labels, 3, 0);
        assert_eq!(
            notice,
            Some(Notice::NonStratified {
                smallest_class: 2,
                folds: 3
            })
        );
    }

    #[test]
    fn shuffled_labels_score_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows = Array2::from_shape_fn((200, 4), |_| rng.sample::<f64, _>(StandardNormal));
        let mut labels: Vec<String> = (0..200)
            .map(|i| if i % 2 == 0 { "a" } else { "b" }.to_string())
            .collect();
        labels.shuffle(&mut rng);
        let cv = cross_validate(&ClassifierSpec::Knn { k: 3 }, rows.view(), &labels, 5, 1).unwrap();
        assert!(
            (cv.mean_accuracy() - 0.5).abs() <= 0.15,
            "{}",
            cv.mean_accuracy()
        );
    }

    #[test]
    fn separable_folds_are_perfect() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (rows, labels) = blobs(&mut rng, &[(0.0, 0.0, "a"), (10.0, 10.0, "b")], 15, 0.1);
        let cv = cross_validate(&ClassifierSpec::Knn { k: 3 }, rows.view(), &labels, 5, 0).unwrap();
        assert!(cv.fold_accuracies.iter().all(|&a| a == 1.0));
    }

    #[test]
    fn report_is_consistent_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let centers = [(0.0, 0.0, "a"), (2.0, 0.0, "b"), (0.0, 2.0, "c")];
        let (train, tl) = blobs(&mut rng, &centers, 20, 0.8);
        let (test, sl) = blobs(&mut rng, &centers, 8, 0.8);
        let r1 = get_best_classifier(train.view(), &tl, test.view(), &sl, 11).unwrap();
        let r2 = get_best_classifier(train.view(), &tl, test.view(), &sl, 11).unwrap();
        assert_eq!(r1.to_json(), r2.to_json());
        let best = r1
            .models
            .iter()
            .map(|m| m.mean_cv_accuracy)
            .fold(f64::MIN, f64::max);
        assert_eq!(r1.selected_model().mean_cv_accuracy, best);
        for m in &r1.models {
            let mean = m.fold_accuracies.iter().sum::<f64>() / m.fold_accuracies.len() as f64;
            assert!((mean - m.mean_cv_accuracy).abs() <= 1e-12);
            let t = m.test.as_ref().unwrap();
            assert!((t.accuracy - accuracy(&m.predictions, &sl)).abs() <= 1e-12);
            // macro F1 from the confusion matrix
            let k = t.classes.len();
            let f1: f64 = (0..k)
                .map(|c| {
                    let tp = t.confusion[c][c] as f64;
                    let col: usize = (0..k).map(|r| t.confusion[r][c]).sum();
                    let row: usize = t.confusion[c].iter().sum();
                    if tp == 0.0 {
                        0.0
                    } else {
                        2.0 * tp / (col + row) as f64
                    }
                })
                .sum::<f64>()
                / k as f64;
            assert!((f1 - t.macro_f1).abs() <= 1e-12);
        }
        assert!(r1.to_table().contains("selected"));
    }

    #[test]
    fn knn_ignores_training_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (rows, labels) = blobs(&mut rng, &[(0.0, 0.0, "a"), (1.0, 1.0, "b")], 25, 0.7);
        let (test, _) = blobs(&mut rng, &[(0.5, 0.5, "?")], 30, 0.7);
        let mut perm: Vec<usize> = (0..50).collect();
        perm.shuffle(&mut rng);
        let prow = rows.select(Axis(0), &perm);
        let plab: Vec<String> = perm.iter().map(|&i| labels[i].clone()).collect();
        let spec = ClassifierSpec::Knn { k: 3 };
        assert_eq!(
            fit_predict(&spec, rows.view(), &labels, test.view()).unwrap(),
            fit_predict(&spec, prow.view(), &plab, test.view()).unwrap()
        );
    }

    #[test]
    fn degenerate_inputs() {
        let rows = ndarray::array![[0.0], [1.0], [2.0]];
        let one_class = vec!["a".to_string(); 3];
        assert!(matches!(
            get_best_classifier(rows.view(), &one_class, rows.view(), &one_class, 0),
            Err(LotError::InvalidTrainingSet(_))
        ));
        let two = vec!["a".to_string(), "b".into()];
        let report = get_best_classifier(
            rows.slice(ndarray::s![..2, ..]),
            &two,
            Array2::<f64>::zeros((0, 1)).view(),
            &[],
            0,
        )
        .unwrap();
        assert!(report.notices.contains(&Notice::FoldsReduced {
            requested: 5,
            used: 2
        }));
        assert!(report.notices.contains(&Notice::EmptyTestSplit));
        assert!(report.models.iter().all(|m| m.test.is_none()));
    }

    #[test]
    fn split_keeps_every_class_in_training() {
        let labels: Vec<String> = ["a", "a", "a", "a", "a", "b"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let (train, test) = stratified_split(&labels, 0.2, 0).unwrap();
        assert_eq!(train.len() + test.len(), 6);
        assert!(train.iter().any(|&i| labels[i] == "b"));
        assert_eq!(test.len(), 1);
    }
}
