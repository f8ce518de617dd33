//! Weighted point clouds and the synthetic data used by tests, examples and the CLI.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{LotError, Result};
use crate::rng;

/// Masses within this distance of summing to one are renormalized; anything further is rejected.
pub const MASS_SUM_TOL: f64 = 1e-9;

/// A probability measure supported on finitely many points of `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Array2<f64>,
    masses: Array1<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Array2<f64>, masses: Array1<f64>) -> Result<Self> {
        let (n, d) = points.dim();
        if n == 0 || d == 0 {
            return Err(LotError::InvalidMeasure(format!(
                "need at least one point and one coordinate, got {n}x{d}"
            )));
        }
        if masses.len() != n {
            return Err(LotError::InvalidMeasure(format!(
                "{} masses for {n} points",
                masses.len()
            )));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(LotError::InvalidMeasure("non-finite coordinate".into()));
        }
        if masses.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(LotError::InvalidMeasure(
                "masses must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = masses.sum();
        if (total - 1.0).abs() > MASS_SUM_TOL {
            return Err(LotError::InvalidMeasure(format!(
                "masses sum to {total}, expected 1"
            )));
        }
        let masses = if total == 1.0 { masses } else { masses / total };
        Ok(DiscreteMeasure { points, masses })
    }

    /// Uniform masses `1/n` on the given points.
    pub fn uniform(points: Array2<f64>) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(LotError::InvalidMeasure("empty point set".into()));
        }
        // validate, then keep exactly 1/n rather than the renormalized sum
        let checked = DiscreteMeasure::new(points, Array1::from_elem(n, 1.0 / n as f64))?;
        Ok(DiscreteMeasure {
            points: checked.points,
            masses: Array1::from_elem(n, 1.0 / n as f64),
        })
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn masses(&self) -> ArrayView1<'_, f64> {
        self.masses.view()
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn into_parts(self) -> (Array2<f64>, Array1<f64>) {
        (self.points, self.masses)
    }

    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.masses.iter().all(|&m| (m - w).abs() <= 1e-15)
    }

    /// Rejects zero-mass points; required of any measure used as a transport source.
    pub fn require_positive_masses(&self) -> Result<()> {
        if let Some(i) = self.masses.iter().position(|&w| w <= 0.0) {
            return Err(LotError::InvalidMeasure(format!(
                "point {i} has zero mass; source measures need positive masses"
            )));
        }
        Ok(())
    }

    /// Hex digest of the support and masses; two measures share it iff they are bit-identical.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.len() as u64).to_le_bytes());
        hasher.update((self.dim() as u64).to_le_bytes());
        for x in self.points.iter() {
            hasher.update(x.to_bits().to_le_bytes());
        }
        for w in self.masses.iter() {
            hasher.update(w.to_bits().to_le_bytes());
        }
        hex::encode(&hasher.finalize()[..16])
    }

    /// Mass-weighted mean of the support.
    pub fn mean(&self) -> Array1<f64> {
        self.masses.dot(&self.points)
    }

    pub fn translated(&self, shift: ArrayView1<'_, f64>) -> Result<Self> {
        if shift.len() != self.dim() {
            return Err(LotError::DimensionError {
                expected: self.dim(),
                found: shift.len(),
            });
        }
        Ok(DiscreteMeasure {
            points: &self.points + &shift,
            masses: self.masses.clone(),
        })
    }

    /// The same measure shifted so its weighted mean sits at the origin.
    pub fn centered(&self) -> Self {
        let mean = self.mean();
        DiscreteMeasure {
            points: &self.points - &mean,
            masses: self.masses.clone(),
        }
    }
}

/// Point clouds with one class label each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCloudSet {
    clouds: Vec<DiscreteMeasure>,
    labels: Vec<String>,
}

impl LabeledCloudSet {
    pub fn new(clouds: Vec<DiscreteMeasure>, labels: Vec<String>) -> Result<Self> {
        if clouds.len() != labels.len() {
            return Err(LotError::InvalidDataset(format!(
                "{} clouds but {} labels",
                clouds.len(),
                labels.len()
            )));
        }
        if clouds.is_empty() {
            return Err(LotError::InvalidDataset("no clouds".into()));
        }
        let d = clouds[0].dim();
        if let Some(bad) = clouds.iter().find(|c| c.dim() != d) {
            return Err(LotError::DimensionError {
                expected: d,
                found: bad.dim(),
            });
        }
        Ok(LabeledCloudSet { clouds, labels })
    }

    pub fn clouds(&self) -> &[DiscreteMeasure] {
        &self.clouds
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.clouds[0].dim()
    }

    /// Distinct labels in sorted order.
    pub fn classes(&self) -> Vec<String> {
        self.labels
            .iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Indices of the clouds carrying `label`, in input order.
    pub fn indices_of(&self, label: &str) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.as_str() == label)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        LabeledCloudSet::new(
            indices.iter().map(|&i| self.clouds[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i].clone()).collect(),
        )
    }

    pub fn concat(sets: Vec<LabeledCloudSet>) -> Result<Self> {
        let mut clouds = Vec::new();
        let mut labels = Vec::new();
        for set in sets {
            clouds.extend(set.clouds);
            labels.extend(set.labels);
        }
        LabeledCloudSet::new(clouds, labels)
    }

    /// Per-axis mean and (population) standard deviation over every point of every cloud.
    pub fn pooled_moments(&self) -> (Array1<f64>, Array1<f64>) {
        pooled_moments(&self.clouds)
    }
}

/// Per-axis mean and population standard deviation over all points of all clouds, each point
/// counted once.
pub fn pooled_moments(clouds: &[DiscreteMeasure]) -> (Array1<f64>, Array1<f64>) {
    let d = clouds[0].dim();
    let total: usize = clouds.iter().map(|c| c.len()).sum();
    let mut mean = Array1::<f64>::zeros(d);
    for c in clouds {
        mean += &c.points().sum_axis(Axis(0));
    }
    mean /= total as f64;
    let mut var = Array1::<f64>::zeros(d);
    for c in clouds {
        for row in c.points().rows() {
            let diff = &row - &mean;
            var += &(&diff * &diff);
        }
    }
    var /= total as f64;
    (mean, var.mapv(f64::sqrt))
}

pub fn uniform_measure(points: Array2<f64>) -> Result<DiscreteMeasure> {
    DiscreteMeasure::uniform(points)
}

/// `n` i.i.d. draws from an axis-aligned Gaussian with uniform masses.
///
/// Samples are `center + scale * z` with `z` standard normal, drawn row by row, so two calls with
/// the same seed and `n`, `d` differ only by the affine map.
pub fn gaussian_reference(
    n: usize,
    d: usize,
    center: ArrayView1<'_, f64>,
    scale: ArrayView1<'_, f64>,
    seed: u64,
) -> Result<DiscreteMeasure> {
    if n == 0 || d == 0 {
        return Err(LotError::InvalidParameter(format!(
            "gaussian reference needs n >= 1 and d >= 1, got n={n}, d={d}"
        )));
    }
    if center.len() != d || scale.len() != d {
        return Err(LotError::InvalidParameter(format!(
            "center and scale must have length {d}"
        )));
    }
    if center.iter().any(|c| !c.is_finite()) {
        return Err(LotError::InvalidParameter("non-finite center".into()));
    }
    if scale.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(LotError::InvalidParameter(
            "scale components must be positive".into(),
        ));
    }
    let mut rng = rng::seeded(seed);
    let mut points = Array2::<f64>::zeros((n, d));
    for mut row in points.rows_mut() {
        for (k, x) in row.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *x = center[k] + scale[k] * z;
        }
    }
    DiscreteMeasure::uniform(points)
}

/// Gaussian with the pooled per-axis moments of `clouds`. Zero-spread axes fall back to unit scale.
pub fn fitted_gaussian_reference(
    clouds: &[DiscreteMeasure],
    n: usize,
    seed: u64,
) -> Result<DiscreteMeasure> {
    if clouds.is_empty() {
        return Err(LotError::InvalidDataset(
            "no clouds to fit a reference to".into(),
        ));
    }
    let (mean, std) = pooled_moments(clouds);
    let std = std.mapv(|s| if s > 0.0 { s } else { 1.0 });
    gaussian_reference(n, mean.len(), mean.view(), std.view(), seed)
}

/// A family of maps applied to a base cloud; each instance draws its own parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    /// `x + u .* v` with `u` uniform on `[-1, 1)^d`.
    Translate(Array1<f64>),
    /// `(I + u (A - I)) x` with `u` uniform on `[0, 1)`.
    Shear(Array2<f64>),
    /// `(1 + u (s - 1)) x` with `u` uniform on `[0, 1)`.
    Scale(f64),
}

impl Transform {
    pub fn family_name(&self) -> &'static str {
        match self {
            Transform::Translate(_) => "translate",
            Transform::Shear(_) => "shear",
            Transform::Scale(_) => "scale",
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        match self {
            Transform::Translate(v) => {
                if v.len() != d {
                    return Err(LotError::DimensionError {
                        expected: d,
                        found: v.len(),
                    });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(LotError::InvalidParameter("non-finite translation".into()));
                }
            }
            Transform::Shear(a) => {
                if a.dim() != (d, d) {
                    return Err(LotError::InvalidParameter(format!(
                        "shear matrix must be {d}x{d}, got {:?}",
                        a.dim()
                    )));
                }
                if a.iter().any(|x| !x.is_finite()) {
                    return Err(LotError::InvalidParameter("non-finite shear".into()));
                }
                if determinant(a).abs() < 1e-12 {
                    return Err(LotError::InvalidParameter(
                        "shear matrix is singular".into(),
                    ));
                }
            }
            Transform::Scale(s) => {
                if !(s.is_finite() && *s > 0.0) {
                    return Err(LotError::InvalidParameter(format!(
                        "scale factor must be positive, got {s}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn apply(&self, base: &DiscreteMeasure, rng: &mut rng::LotRng) -> Result<DiscreteMeasure> {
        let d = base.dim();
        let points = match self {
            Transform::Translate(v) => {
                let shift: Array1<f64> =
                    Array1::from_iter(v.iter().map(|&vk| rng.gen_range(-1.0..1.0) * vk));
                &base.points + &shift
            }
            Transform::Shear(a) => {
                let u: f64 = rng.gen_range(0.0..1.0);
                let mut m = Array2::<f64>::eye(d);
                m.zip_mut_with(a, |mij, &aij| *mij += u * (aij - *mij));
                if determinant(&m).abs() < 1e-12 {
                    return Err(LotError::InvalidParameter(
                        "sampled shear instance is singular".into(),
                    ));
                }
                base.points.dot(&m.t())
            }
            Transform::Scale(s) => {
                let u: f64 = rng.gen_range(0.0..1.0);
                let factor = 1.0 + u * (s - 1.0);
                &base.points * factor
            }
        };
        DiscreteMeasure::new(points, base.masses.clone())
    }
}

/// `count` copies of `base`, each pushed through a random instance of `transform`.
/// Every cloud is labeled with the family name.
pub fn synthetic_family(
    base: &DiscreteMeasure,
    transform: &Transform,
    count: usize,
    seed: u64,
) -> Result<LabeledCloudSet> {
    transform.validate(base.dim())?;
    if count == 0 {
        return Err(LotError::InvalidParameter(
            "count must be at least 1".into(),
        ));
    }
    let mut rng = rng::seeded(seed);
    let clouds = (0..count)
        .map(|_| transform.apply(base, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let labels = vec![transform.family_name().to_string(); count];
    LabeledCloudSet::new(clouds, labels)
}

fn determinant(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[[i, j]]);
    m.determinant()
}

/// Parameters of the built-in multi-class synthetic dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub clouds_per_class: usize,
    pub points_per_cloud: usize,
    pub dim: usize,
    pub seed: u64,
    /// Make every class a translate family.
    #[serde(default)]
    pub translate_only: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 4,
            clouds_per_class: 15,
            points_per_cloud: 200,
            dim: 3,
            seed: 0,
            translate_only: false,
        }
    }
}

/// Names of the built-in base shapes, cycled when more classes are requested.
pub const SHAPE_NAMES: [&str; 4] = ["ring", "bar", "lobes", "cube"];

/// Base cloud for shape `kind` (index into [`SHAPE_NAMES`], modulo 4).
pub fn base_shape(kind: usize, n: usize, d: usize, seed: u64) -> Result<DiscreteMeasure> {
    if d < 2 {
        return Err(LotError::InvalidParameter(
            "built-in shapes need d >= 2".into(),
        ));
    }
    let mut rng = rng::seeded(seed);
    let mut points = Array2::<f64>::zeros((n, d));
    for mut row in points.rows_mut() {
        let mut noise = |s: f64| -> f64 { s * rng.sample::<f64, _>(StandardNormal) };
        match kind % 4 {
            0 => {
                let t = noise(1.0) * std::f64::consts::PI;
                row[0] = t.cos() + noise(0.08);
                row[1] = t.sin() + noise(0.08);
                for k in 2..d {
                    row[k] = noise(0.15);
                }
            }
            1 => {
                row[0] = noise(1.4);
                for k in 1..d {
                    row[k] = noise(0.25);
                }
            }
            2 => {
                let side = if noise(1.0) >= 0.0 { 1.0 } else { -1.0 };
                row[0] = noise(0.35);
                row[1] = side * 1.1 + noise(0.35);
                for k in 2..d {
                    row[k] = noise(0.35);
                }
            }
            _ => {
                for k in 0..d {
                    row[k] = 2.0 * (noise(1.0).tanh());
                }
            }
        }
    }
    DiscreteMeasure::uniform(points)
}

/// Multi-class dataset: class `k` is a family of translates (even `k`, or every `k` when
/// `translate_only`) or shears (odd `k`) of its own base shape. Labels are the shape names.
pub fn synthetic_dataset(spec: &SyntheticSpec) -> Result<LabeledCloudSet> {
    if spec.classes == 0 || spec.clouds_per_class == 0 || spec.points_per_cloud == 0 {
        return Err(LotError::InvalidParameter(
            "classes, clouds_per_class and points_per_cloud must be positive".into(),
        ));
    }
    let d = spec.dim;
    let mut sets = Vec::with_capacity(spec.classes);
    for k in 0..spec.classes {
        let stage = format!("class-{k}");
        let base = base_shape(
            k,
            spec.points_per_cloud,
            d,
            rng::sub_seed(spec.seed, &stage),
        )?;
        let transform = if k % 2 == 0 || spec.translate_only {
            Transform::Translate(Array1::from_elem(d, 0.5))
        } else {
            let mut a = Array2::<f64>::eye(d);
            a[[0, 1]] = 0.6;
            a[[d - 1, 0]] = -0.4;
            Transform::Shear(a)
        };
        let family = synthetic_family(
            &base,
            &transform,
            spec.clouds_per_class,
            rng::sub_seed(spec.seed, &format!("{stage}-family")),
        )?;
        let mut name = SHAPE_NAMES[k % 4].to_string();
        if k >= 4 {
            name = format!("{name}{}", k / 4);
        }
        let labels = vec![name; spec.clouds_per_class];
        sets.push(LabeledCloudSet::new(family.clouds, labels)?);
    }
    LabeledCloudSet::concat(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_masses() {
        let m = uniform_measure(Array2::zeros((4, 2))).unwrap();
        assert!(m.masses().iter().all(|&w| w == 0.25));
        let single = uniform_measure(array![[3.0, 1.0]]).unwrap();
        assert_eq!(single.masses().to_vec(), vec![1.0]);
    }

    #[test]
    fn uniform_sum_for_large_sample() {
        let g = gaussian_reference(
            5000,
            3,
            array![0., 0., 0.].view(),
            array![1., 1., 1.].view(),
            3,
        )
        .unwrap();
        assert!(g.masses().iter().all(|&w| w == 1.0 / 5000.0));
        assert!((g.masses().sum() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(
            uniform_measure(Array2::zeros((0, 2))),
            Err(LotError::InvalidMeasure(_))
        ));
    }

    #[test]
    fn masses_near_one_are_renormalized_and_far_rejected() {
        let pts = array![[0.0], [1.0]];
        let m = DiscreteMeasure::new(pts.clone(), array![0.5, 0.5 + 5e-10]).unwrap();
        assert!((m.masses().sum() - 1.0).abs() < 1e-15);
        assert!(DiscreteMeasure::new(pts.clone(), array![0.5, 0.6]).is_err());
        assert!(DiscreteMeasure::new(pts.clone(), array![1.5, -0.5]).is_err());
        assert!(DiscreteMeasure::new(array![[f64::NAN], [0.0]], array![0.5, 0.5]).is_err());
    }

    #[test]
    fn gaussian_moments_and_determinism() {
        let zero = Array1::zeros(3);
        let one = Array1::ones(3);
        let g = gaussian_reference(5000, 3, zero.view(), one.view(), 11).unwrap();
        assert_eq!(g.points().dim(), (5000, 3));
        let mean = g.points().mean_axis(Axis(0)).unwrap();
        // 4 * sigma / sqrt(n) ~= 0.057
        assert!(mean.iter().all(|m| m.abs() < 0.1), "{mean}");
        let again = gaussian_reference(5000, 3, zero.view(), one.view(), 11).unwrap();
        assert_eq!(g, again);
        assert_eq!(g.content_hash(), again.content_hash());
    }

    #[test]
    fn gaussian_single_point() {
        let g = gaussian_reference(1, 2, array![5., 5.].view(), array![1., 1.].view(), 0).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.masses()[0], 1.0);
    }

    #[test]
    fn gaussian_rejects_nonpositive_scale() {
        let r = gaussian_reference(3, 2, array![0., 0.].view(), array![1., 0.].view(), 0);
        assert!(matches!(r, Err(LotError::InvalidParameter(_))));
    }

    #[test]
    fn identity_transforms_reproduce_base_bitwise() {
        let base =
            gaussian_reference(50, 3, Array1::zeros(3).view(), Array1::ones(3).view(), 1).unwrap();
        for t in [
            Transform::Translate(Array1::zeros(3)),
            Transform::Scale(1.0),
            Transform::Shear(Array2::eye(3)),
        ] {
            let fam = synthetic_family(&base, &t, 3, 5).unwrap();
            for c in fam.clouds() {
                assert_eq!(c, &base, "{}", t.family_name());
            }
        }
    }

    #[test]
    fn translate_family_is_rigid() {
        let base =
            gaussian_reference(20, 2, Array1::zeros(2).view(), Array1::ones(2).view(), 1).unwrap();
        let fam = synthetic_family(&base, &Transform::Translate(array![3.0, -1.0]), 3, 9).unwrap();
        assert_eq!(fam.len(), 3);
        assert!(fam.labels().iter().all(|l| l == "translate"));
        for c in fam.clouds() {
            let diff = &c.points() - &base.points();
            let first = diff.row(0).to_owned();
            for row in diff.rows() {
                assert!((&row - &first).iter().all(|x| x.abs() < 1e-12));
            }
        }
    }

    #[test]
    fn singular_shear_rejected() {
        let base = uniform_measure(array![[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let singular = array![[1.0, 2.0], [2.0, 4.0]];
        assert!(matches!(
            synthetic_family(&base, &Transform::Shear(singular), 2, 0),
            Err(LotError::InvalidParameter(_))
        ));
    }

    #[test]
    fn synthetic_dataset_shape() {
        let spec = SyntheticSpec {
            classes: 4,
            clouds_per_class: 3,
            points_per_cloud: 30,
            dim: 3,
            seed: 2,
            ..SyntheticSpec::default()
        };
        let set = synthetic_dataset(&spec).unwrap();
        assert_eq!(set.len(), 12);
        assert_eq!(set.classes(), vec!["bar", "cube", "lobes", "ring"]);
        assert_eq!(synthetic_dataset(&spec).unwrap().clouds(), set.clouds());
    }
}
