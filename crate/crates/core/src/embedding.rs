//! Linear optimal transport embeddings.
//!
//! A cloud `mu` is represented by the barycentric projection `T` of the optimal plan from a fixed
//! reference `sigma` (m points) to `mu`, evaluated at the reference points. Distances between
//! embeddings are `L2(sigma)` distances between maps.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{LotError, Result};
use crate::measures::{fitted_gaussian_reference, DiscreteMeasure, LabeledCloudSet};
use crate::transport::{
    barycentric_projection, cost_matrix, solve, CostExponent, Method, PROJECTION_EPS,
};

/// How clouds are mapped into the reference space.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EmbedOptions {
    pub method: Method,
    /// Divide every map entry by `sqrt(m)`, so flattened Euclidean distances are LOT distances
    /// under uniform reference masses.
    pub normalize: bool,
    pub exponent: CostExponent,
}

impl EmbedOptions {
    pub fn new(method: Method, normalize: bool) -> Self {
        EmbedOptions {
            method,
            normalize,
            exponent: CostExponent::Two,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LotEmbedding {
    map: Array2<f64>,
    normalized: bool,
    reference_id: String,
}

impl LotEmbedding {
    pub fn new(map: Array2<f64>, normalized: bool, reference_id: String) -> Result<Self> {
        if map.iter().any(|x| !x.is_finite()) {
            return Err(LotError::InvalidParameter(
                "embedding has non-finite entries".into(),
            ));
        }
        Ok(LotEmbedding {
            map,
            normalized,
            reference_id,
        })
    }

    /// The stored map; divided by `sqrt(m)` when normalized.
    pub fn map(&self) -> ArrayView2<'_, f64> {
        self.map.view()
    }

    /// The map in original coordinates.
    pub fn raw_map(&self) -> Array2<f64> {
        if self.normalized {
            &self.map * (self.map.nrows() as f64).sqrt()
        } else {
            self.map.clone()
        }
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn reference_id(&self) -> &str {
        &self.reference_id
    }

    /// Row-major over (reference point, coordinate).
    pub fn flatten(&self) -> Array1<f64> {
        self.map.iter().copied().collect()
    }

    pub fn from_flat(
        row: ArrayView1<'_, f64>,
        m: usize,
        d: usize,
        normalized: bool,
        reference_id: String,
    ) -> Result<Self> {
        if row.len() != m * d {
            return Err(LotError::DimensionError {
                expected: m * d,
                found: row.len(),
            });
        }
        let map = Array2::from_shape_vec((m, d), row.to_vec()).expect("length checked");
        LotEmbedding::new(map, normalized, reference_id)
    }
}

/// Stacked, flattened embeddings of a labeled set against one reference.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbeddingSet {
    rows: Array2<f64>,
    labels: Vec<String>,
    reference: DiscreteMeasure,
    normalized: bool,
    transport_costs: Vec<f64>,
}

impl LabeledEmbeddingSet {
    /// `transport_costs` may be empty when the set was loaded rather than computed.
    pub fn new(
        rows: Array2<f64>,
        labels: Vec<String>,
        reference: DiscreteMeasure,
        normalized: bool,
        transport_costs: Vec<f64>,
    ) -> Result<Self> {
        if rows.nrows() != labels.len() {
            return Err(LotError::InvalidDataset(format!(
                "{} embedding rows but {} labels",
                rows.nrows(),
                labels.len()
            )));
        }
        let width = reference.len() * reference.dim();
        if rows.ncols() != width {
            return Err(LotError::DimensionError {
                expected: width,
                found: rows.ncols(),
            });
        }
        if !transport_costs.is_empty() && transport_costs.len() != labels.len() {
            return Err(LotError::InvalidDataset(
                "transport costs do not align with rows".into(),
            ));
        }
        Ok(LabeledEmbeddingSet {
            rows,
            labels,
            reference,
            normalized,
            transport_costs,
        })
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn reference(&self) -> &DiscreteMeasure {
        &self.reference
    }

    pub fn reference_id(&self) -> String {
        self.reference.content_hash()
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    /// Objective of each cloud's transport solve; empty for loaded sets.
    pub fn transport_costs(&self) -> &[f64] {
        &self.transport_costs
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> Vec<String> {
        let mut c = self.labels.clone();
        c.sort();
        c.dedup();
        c
    }

    pub fn indices_of(&self, label: &str) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.labels[i] == label)
            .collect()
    }

    pub fn embedding(&self, k: usize) -> LotEmbedding {
        let map = self.unflatten(self.rows.row(k));
        LotEmbedding {
            map,
            normalized: self.normalized,
            reference_id: self.reference_id(),
        }
    }

    /// Pushforward of the reference under an arbitrary row in this set's flattened space, such as
    /// a convex combination of rows.
    pub fn pushforward_row(&self, row: ArrayView1<'_, f64>) -> Result<DiscreteMeasure> {
        if row.len() != self.rows.ncols() {
            return Err(LotError::DimensionError {
                expected: self.rows.ncols(),
                found: row.len(),
            });
        }
        let mut points = self.unflatten(row);
        if self.normalized {
            points *= (self.reference.len() as f64).sqrt();
        }
        DiscreteMeasure::new(points, self.reference.masses().to_owned())
    }

    fn unflatten(&self, row: ArrayView1<'_, f64>) -> Array2<f64> {
        Array2::from_shape_vec((self.reference.len(), self.reference.dim()), row.to_vec())
            .expect("row width matches reference")
    }
}

/// Maps `target` into the tangent space at `reference` with squared Euclidean cost.
pub fn embed_cloud(
    reference: &DiscreteMeasure,
    target: &DiscreteMeasure,
    method: &Method,
    normalize: bool,
) -> Result<LotEmbedding> {
    embed_cloud_with(reference, target, &EmbedOptions::new(*method, normalize)).map(|(e, _)| e)
}

/// Like [`embed_cloud`], also returning the objective of the transport solve.
pub fn embed_cloud_with(
    reference: &DiscreteMeasure,
    target: &DiscreteMeasure,
    opts: &EmbedOptions,
) -> Result<(LotEmbedding, f64)> {
    reference.require_positive_masses()?;
    let cost = cost_matrix(reference, target, opts.exponent)?;
    let plan = solve(reference.masses(), target.masses(), &cost, &opts.method)?;
    let mut map = barycentric_projection(&plan, target.points(), PROJECTION_EPS)?;
    if opts.normalize {
        map /= (reference.len() as f64).sqrt();
    }
    let embedding = LotEmbedding::new(map, opts.normalize, reference.content_hash())?;
    Ok((embedding, plan.objective()))
}

pub fn embed_point_clouds(
    reference: &DiscreteMeasure,
    targets: &LabeledCloudSet,
    method: &Method,
    normalize: bool,
) -> Result<LabeledEmbeddingSet> {
    embed_point_clouds_with(reference, targets, &EmbedOptions::new(*method, normalize))
}

/// Embeds every cloud in parallel. Row `k` always belongs to cloud `k`; on failure the error of the
/// lowest failing index is returned, tagged with that index.
pub fn embed_point_clouds_with(
    reference: &DiscreteMeasure,
    targets: &LabeledCloudSet,
    opts: &EmbedOptions,
) -> Result<LabeledEmbeddingSet> {
    if targets.dim() != reference.dim() {
        return Err(LotError::DimensionError {
            expected: reference.dim(),
            found: targets.dim(),
        });
    }
    reference.require_positive_masses()?;
    let results: Vec<Result<(LotEmbedding, f64)>> = targets
        .clouds()
        .par_iter()
        .map(|cloud| embed_cloud_with(reference, cloud, opts))
        .collect();
    let width = reference.len() * reference.dim();
    let mut rows = Array2::<f64>::zeros((targets.len(), width));
    let mut costs = Vec::with_capacity(targets.len());
    for (k, result) in results.into_iter().enumerate() {
        let (embedding, cost) = result.map_err(|e| e.at_cloud(k))?;
        rows.row_mut(k).assign(&embedding.flatten());
        costs.push(cost);
    }
    LabeledEmbeddingSet::new(
        rows,
        targets.labels().to_vec(),
        reference.clone(),
        opts.normalize,
        costs,
    )
}

/// `sqrt(sum_i alpha_i |T1(x_i) - T2(x_i)|^2)` over the reference points.
pub fn lot_distance(
    e1: &LotEmbedding,
    e2: &LotEmbedding,
    reference_masses: ArrayView1<'_, f64>,
) -> Result<f64> {
    if e1.reference_id != e2.reference_id {
        return Err(LotError::ReferenceMismatch(
            e1.reference_id.clone(),
            e2.reference_id.clone(),
        ));
    }
    if e1.map.dim() != e2.map.dim() {
        return Err(LotError::DimensionError {
            expected: e1.map.len(),
            found: e2.map.len(),
        });
    }
    if reference_masses.len() != e1.map.nrows() {
        return Err(LotError::DimensionError {
            expected: e1.map.nrows(),
            found: reference_masses.len(),
        });
    }
    let diff = e1.raw_map() - e2.raw_map();
    let total: f64 = diff
        .rows()
        .into_iter()
        .zip(reference_masses.iter())
        .map(|(r, &w)| w * r.dot(&r))
        .sum();
    Ok(total.max(0.0).sqrt())
}

/// `T # sigma`: the map's points carrying the reference masses.
pub fn pushforward(
    e: &LotEmbedding,
    reference_masses: ArrayView1<'_, f64>,
) -> Result<DiscreteMeasure> {
    if reference_masses.len() != e.map.nrows() {
        return Err(LotError::DimensionError {
            expected: e.map.nrows(),
            found: reference_masses.len(),
        });
    }
    DiscreteMeasure::new(e.raw_map(), reference_masses.to_owned())
}

/// One step of the reference refinement loop.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Embeddings against this iteration's reference, which they carry.
    pub embeddings: LabeledEmbeddingSet,
    /// Uniform-weight LOT barycenter of each class, sorted by label.
    pub class_barycenters: Vec<(String, DiscreteMeasure)>,
}

impl IterationRecord {
    pub fn reference(&self) -> &DiscreteMeasure {
        self.embeddings.reference()
    }

    pub fn transport_costs(&self) -> &[f64] {
        self.embeddings.transport_costs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub iterations: Vec<IterationRecord>,
}

/// Mean of the rows with the given indices, in the set's flattened space.
pub(crate) fn mean_row(rows: ArrayView2<'_, f64>, indices: &[usize]) -> Array1<f64> {
    let mut acc = Array1::<f64>::zeros(rows.ncols());
    for &i in indices {
        acc += &rows.row(i);
    }
    acc / indices.len() as f64
}

/// Re-embeds the data against successively refined references.
///
/// Iteration 0 uses an `m_reference`-point Gaussian with the pooled per-axis moments of the data.
/// Iteration `j + 1` uses the pushforward of iteration `j`'s reference under the mean of all maps.
/// The trace holds `n_iterations + 1` records.
pub fn compute_barycenter_embeddings(
    n_iterations: usize,
    data: &LabeledCloudSet,
    opts: &EmbedOptions,
    m_reference: usize,
    seed: u64,
) -> Result<IterationTrace> {
    if m_reference == 0 {
        return Err(LotError::InvalidParameter(
            "reference size must be at least 1".into(),
        ));
    }
    let initial = fitted_gaussian_reference(data.clouds(), m_reference, seed)?;
    refine_reference(initial, n_iterations, data, opts)
}

/// The refinement loop of [`compute_barycenter_embeddings`] from a given initial reference.
pub fn refine_reference(
    initial: DiscreteMeasure,
    n_iterations: usize,
    data: &LabeledCloudSet,
    opts: &EmbedOptions,
) -> Result<IterationTrace> {
    let mut reference = initial;
    let all: Vec<usize> = (0..data.len()).collect();
    let mut iterations = Vec::with_capacity(n_iterations + 1);
    for j in 0..=n_iterations {
        let embeddings = embed_point_clouds_with(&reference, data, opts)?;
        let class_barycenters = embeddings
            .classes()
            .into_iter()
            .map(|label| {
                let idx = embeddings.indices_of(&label);
                let cloud = embeddings.pushforward_row(mean_row(embeddings.rows(), &idx).view())?;
                Ok((label, cloud))
            })
            .collect::<Result<Vec<_>>>()?;
        if j < n_iterations {
            reference = embeddings.pushforward_row(mean_row(embeddings.rows(), &all).view())?;
        }
        iterations.push(IterationRecord {
            embeddings,
            class_barycenters,
        });
    }
    Ok(IterationTrace { iterations })
}

/// Per-axis population variance of a measure, weighted by its masses.
pub fn coordinate_variance(measure: &DiscreteMeasure) -> Array1<f64> {
    let w = measure.masses();
    let p = measure.points();
    let mean = p.t().dot(&w);
    let centered = &p - &mean.view().insert_axis(Axis(0));
    (&centered * &centered).t().dot(&w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{gaussian_reference, uniform_measure};
    use crate::transport::w2_distance;
    use ndarray::{array, Array1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DiscreteMeasure {
        uniform_measure(Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0))).unwrap()
    }

    fn reference(m: usize, d: usize, seed: u64) -> DiscreteMeasure {
        gaussian_reference(m, d, Array1::zeros(d).view(), Array1::ones(d).view(), seed).unwrap()
    }

    #[test]
    fn self_embedding_has_zero_pushforward_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_cloud(&mut rng, 20, 2);
        let e = embed_cloud(&x, &x, &Method::Exact, false).unwrap();
        let push = pushforward(&e, x.masses()).unwrap();
        assert!(w2_distance(&push, &x, &Method::Exact).unwrap() <= 1e-9);
    }

    #[test]
    fn translate_shifts_the_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sigma = reference(30, 3, 9);
        let mu = random_cloud(&mut rng, 25, 3);
        let v = array![0.7, -1.2, 2.5];
        let e0 = embed_cloud(&sigma, &mu, &Method::Exact, false).unwrap();
        let e1 = embed_cloud(
            &sigma,
            &mu.translated(v.view()).unwrap(),
            &Method::Exact,
            false,
        )
        .unwrap();
        let diff = e1.raw_map() - e0.raw_map();
        for row in diff.rows() {
            for (a, b) in row.iter().zip(v.iter()) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
        let dist = lot_distance(&e0, &e1, sigma.masses()).unwrap();
        let norm = v.dot(&v).sqrt();
        assert!((dist - norm).abs() <= 1e-9);
    }

    #[test]
    fn equal_size_uniform_map_is_a_permutation_of_the_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sigma = reference(15, 2, 4);
        let mu = random_cloud(&mut rng, 15, 2);
        let e = embed_cloud(&sigma, &mu, &Method::Exact, false).unwrap();
        let mut used = vec![false; 15];
        for row in e.map().rows() {
            let j = (0..15)
                .find(|&j| {
                    !used[j]
                        && mu
                            .points()
                            .row(j)
                            .iter()
                            .zip(row.iter())
                            .all(|(a, b)| (a - b).abs() <= 1e-9)
                })
                .expect("every map row is a target point");
            used[j] = true;
        }
    }

    #[test]
    fn embed_point_clouds_shape_and_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sigma = reference(10, 2, 5);
        let clouds: Vec<_> = (0..3).map(|_| random_cloud(&mut rng, 12, 2)).collect();
        let set =
            LabeledCloudSet::new(clouds.clone(), vec!["a".into(), "b".into(), "a".into()]).unwrap();
        let emb = embed_point_clouds(&sigma, &set, &Method::Exact, false).unwrap();
        assert_eq!(emb.rows().dim(), (3, 20));
        for (k, cloud) in clouds.iter().enumerate() {
            let single = embed_cloud(&sigma, cloud, &Method::Exact, false).unwrap();
            assert_eq!(emb.rows().row(k), single.flatten());
        }
    }

    #[test]
    fn identical_targets_give_identical_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sigma = reference(8, 2, 6);
        let c = random_cloud(&mut rng, 10, 2);
        let set = LabeledCloudSet::new(vec![c.clone(), c.clone(), c], vec!["x".into(); 3]).unwrap();
        let emb = embed_point_clouds(&sigma, &set, &Method::Exact, true).unwrap();
        assert_eq!(emb.rows().row(0), emb.rows().row(1));
        assert_eq!(emb.rows().row(1), emb.rows().row(2));
    }

    #[test]
    fn failing_cloud_is_tagged_with_its_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sigma = reference(5, 2, 7);
        let good = random_cloud(&mut rng, 5, 2);
        let set =
            LabeledCloudSet::new(vec![good.clone(), good], vec!["a".into(), "b".into()]).unwrap();
        let method = Method::Sinkhorn(crate::transport::SinkhornConfig {
            lambda: 1.0,
            max_iters: 1,
            marginal_tol: 1e-15,
        });
        match embed_point_clouds(&sigma, &set, &method, false) {
            Err(LotError::Cloud { index, source }) => {
                assert_eq!(index, 0);
                assert!(matches!(*source, LotError::NonConvergence { .. }));
            }
            other => panic!("expected a tagged error, got {other:?}"),
        }
    }

    #[test]
    fn pushforward_recovers_clouds_in_the_permutation_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sigma = reference(12, 2, 8);
        let clouds: Vec<_> = (0..4).map(|_| random_cloud(&mut rng, 12, 2)).collect();
        let set = LabeledCloudSet::new(clouds.clone(), vec!["c".into(); 4]).unwrap();
        let emb = embed_point_clouds(&sigma, &set, &Method::Exact, true).unwrap();
        for (k, cloud) in clouds.iter().enumerate() {
            let push = emb.pushforward_row(emb.rows().row(k)).unwrap();
            assert!(w2_distance(&push, cloud, &Method::Exact).unwrap() <= 1e-9);
            let via_embedding = pushforward(&emb.embedding(k), sigma.masses()).unwrap();
            assert_eq!(push, via_embedding);
        }
    }

    #[test]
    fn normalized_distance_is_flat_euclidean() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sigma = reference(16, 3, 9);
        let a = random_cloud(&mut rng, 20, 3);
        let b = random_cloud(&mut rng, 11, 3);
        let ea = embed_cloud(&sigma, &a, &Method::Exact, true).unwrap();
        let eb = embed_cloud(&sigma, &b, &Method::Exact, true).unwrap();
        let lot = lot_distance(&ea, &eb, sigma.masses()).unwrap();
        let diff = ea.flatten() - eb.flatten();
        assert!((lot - diff.dot(&diff).sqrt()).abs() <= 1e-12);
        let raw_a = embed_cloud(&sigma, &a, &Method::Exact, false).unwrap();
        let pa = pushforward(&raw_a, sigma.masses()).unwrap();
        let pn = pushforward(&ea, sigma.masses()).unwrap();
        for (x, y) in pa.points().iter().zip(pn.points().iter()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_mass_reference_points_are_rejected() {
        let reference =
            DiscreteMeasure::new(array![[0.0, 0.0], [1.0, 0.0]], array![1.0, 0.0]).unwrap();
        let target = DiscreteMeasure::uniform(array![[0.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(
            embed_cloud(&reference, &target, &Method::Exact, false),
            Err(LotError::InvalidMeasure(_))
        ));
    }

    #[test]
    fn mismatched_references_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mu = random_cloud(&mut rng, 10, 2);
        let e1 = embed_cloud(&reference(6, 2, 1), &mu, &Method::Exact, false).unwrap();
        let e2 = embed_cloud(&reference(6, 2, 2), &mu, &Method::Exact, false).unwrap();
        assert!(matches!(
            lot_distance(&e1, &e2, Array1::from_elem(6, 1.0 / 6.0).view()),
            Err(LotError::ReferenceMismatch(..))
        ));
        assert_eq!(
            lot_distance(&e1, &e1, Array1::from_elem(6, 1.0 / 6.0).view()).unwrap(),
            0.0
        );
    }

    #[test]
    fn lot_distance_bounds_pushforward_w2() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let sigma = reference(14, 2, 11);
        for _ in 0..20 {
            let (n1, n2) = (rng.gen_range(3..20), rng.gen_range(3..20));
            let a = random_cloud(&mut rng, n1, 2);
            let b = random_cloud(&mut rng, n2, 2);
            let ea = embed_cloud(&sigma, &a, &Method::Exact, false).unwrap();
            let eb = embed_cloud(&sigma, &b, &Method::Exact, false).unwrap();
            let lot = lot_distance(&ea, &eb, sigma.masses()).unwrap();
            let w2 = w2_distance(
                &pushforward(&ea, sigma.masses()).unwrap(),
                &pushforward(&eb, sigma.masses()).unwrap(),
                &Method::Exact,
            )
            .unwrap();
            assert!(w2 <= lot + 1e-9);
        }
    }

    #[test]
    fn sinkhorn_pushforward_is_blurred() {
        let base = crate::measures::base_shape(0, 100, 2, 3).unwrap();
        let sigma = reference(80, 2, 12);
        let exact = embed_cloud(&sigma, &base, &Method::Exact, false).unwrap();
        let entropic = embed_cloud(&sigma, &base, &Method::sinkhorn(0.05), false).unwrap();
        let ve = coordinate_variance(&pushforward(&exact, sigma.masses()).unwrap());
        let vs = coordinate_variance(&pushforward(&entropic, sigma.masses()).unwrap());
        assert!(vs.sum() < ve.sum(), "{vs} vs {ve}");
    }

    #[test]
    fn iteration_zero_only_and_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let clouds: Vec<_> = (0..4).map(|_| random_cloud(&mut rng, 9, 2)).collect();
        let labels = vec!["a".into(), "a".into(), "b".into(), "b".into()];
        let set = LabeledCloudSet::new(clouds, labels).unwrap();
        let opts = EmbedOptions::default();
        let trace = compute_barycenter_embeddings(0, &set, &opts, 9, 3).unwrap();
        assert_eq!(trace.iterations.len(), 1);
        assert_eq!(trace.iterations[0].class_barycenters.len(), 2);
        assert_eq!(trace.iterations[0].transport_costs().len(), 4);

        // every cloud equal to C: from iteration 1 on the reference is C and stays there
        let c = reference(9, 2, 1);
        let same = LabeledCloudSet::new(vec![c.clone(); 3], vec!["s".into(); 3]).unwrap();
        let trace = compute_barycenter_embeddings(3, &same, &opts, 9, 3).unwrap();
        assert_eq!(trace.iterations.len(), 4);
        for record in &trace.iterations[1..] {
            assert!(w2_distance(record.reference(), &c, &Method::Exact).unwrap() <= 1e-9);
            assert!(record.transport_costs().iter().all(|&t| t <= 1e-12));
        }
    }

    #[test]
    fn refinement_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let clouds: Vec<_> = (0..4).map(|_| random_cloud(&mut rng, 10, 2)).collect();
        let set = LabeledCloudSet::new(clouds, vec!["a".into(); 4]).unwrap();
        let opts = EmbedOptions::default();
        let t1 = compute_barycenter_embeddings(2, &set, &opts, 7, 5).unwrap();
        let t2 = compute_barycenter_embeddings(2, &set, &opts, 7, 5).unwrap();
        assert_eq!(t1, t2);
    }
}
