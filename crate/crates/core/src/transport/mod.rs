//! Discrete optimal transport between weighted point clouds.

mod network_simplex;
mod sinkhorn;

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{LotError, Result};
use crate::measures::{DiscreteMeasure, MASS_SUM_TOL};

pub use sinkhorn::{solve_sinkhorn, SinkhornConfig};

/// Tolerance on plan marginals checked after every exact solve.
pub const PLAN_MARGINAL_TOL: f64 = 1e-6;

/// Default `eps` added to the row sums before row-normalizing a plan.
pub const PROJECTION_EPS: f64 = 1e-12;

/// Whether cost entries are Euclidean distances or their squares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum CostExponent {
    One,
    #[default]
    Two,
}

impl CostExponent {
    pub fn as_u8(self) -> u8 {
        match self {
            CostExponent::One => 1,
            CostExponent::Two => 2,
        }
    }
}

impl TryFrom<u8> for CostExponent {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        match v {
            1 => Ok(CostExponent::One),
            2 => Ok(CostExponent::Two),
            other => Err(format!("cost exponent must be 1 or 2, got {other}")),
        }
    }
}

impl From<CostExponent> for u8 {
    fn from(e: CostExponent) -> u8 {
        e.as_u8()
    }
}

/// How a transport plan is computed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    #[default]
    Exact,
    Sinkhorn(SinkhornConfig),
}

impl Method {
    pub fn sinkhorn(lambda: f64) -> Self {
        Method::Sinkhorn(SinkhornConfig {
            lambda,
            ..SinkhornConfig::default()
        })
    }

    pub fn label(&self) -> String {
        match self {
            Method::Exact => "exact".to_string(),
            Method::Sinkhorn(cfg) => format!("sinkhorn({})", cfg.lambda),
        }
    }
}

/// Pairwise costs between the supports of two measures.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Array2<f64>,
    exponent: CostExponent,
}

impl CostMatrix {
    pub fn new(entries: Array2<f64>, exponent: CostExponent) -> Result<Self> {
        if let Some(bad) = entries.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(LotError::InvalidCost(format!(
                "entries must be finite and nonnegative, found {bad}"
            )));
        }
        Ok(CostMatrix { entries, exponent })
    }

    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn exponent(&self) -> CostExponent {
        self.exponent
    }

    pub fn dim(&self) -> (usize, usize) {
        self.entries.dim()
    }

    pub fn median(&self) -> f64 {
        median(self.entries.iter().copied().collect())
    }

    /// Debug dump: header `rows,cols,exponent`, then one row per line.
    pub fn to_csv(&self) -> String {
        let (r, c) = self.dim();
        let mut out = format!("{r},{c},{}\n", self.exponent.as_u8());
        write_matrix_rows(&mut out, self.entries.view());
        out
    }
}

/// A coupling between two discrete measures together with its cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    coupling: Array2<f64>,
    objective: f64,
    method: Method,
}

impl TransportPlan {
    pub fn coupling(&self) -> ArrayView2<'_, f64> {
        self.coupling.view()
    }

    /// `<G, M>` for the cost matrix the plan was solved against.
    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn into_coupling(self) -> Array2<f64> {
        self.coupling
    }

    /// Largest absolute deviation of the row and column sums from `a` and `b`.
    pub fn marginal_violation(&self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        let rows = self.coupling.sum_axis(ndarray::Axis(1));
        let cols = self.coupling.sum_axis(ndarray::Axis(0));
        let dr = (&rows - &a).iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        let dc = (&cols - &b).iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        dr.max(dc)
    }

    /// Debug dump: header `rows,cols,method`, then one row per line.
    pub fn to_csv(&self) -> String {
        let (r, c) = self.coupling.dim();
        let mut out = format!("{r},{c},{}\n", self.method.label());
        write_matrix_rows(&mut out, self.coupling.view());
        out
    }

    pub(crate) fn from_parts(coupling: Array2<f64>, cost: &CostMatrix, method: Method) -> Self {
        let objective = (&coupling * &cost.entries).sum();
        TransportPlan {
            coupling,
            objective,
            method,
        }
    }
}

fn write_matrix_rows(out: &mut String, m: ArrayView2<'_, f64>) {
    for row in m.rows() {
        let mut first = true;
        for x in row.iter() {
            if !first {
                out.push(',');
            }
            first = false;
            let _ = write!(out, "{x}");
        }
        out.push('\n');
    }
}

pub(crate) fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// `entries[i][j] = |x_i - y_j|^exponent`.
pub fn cost_matrix(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    exponent: CostExponent,
) -> Result<CostMatrix> {
    point_cost_matrix(source.points(), target.points(), exponent)
}

pub(crate) fn point_cost_matrix(
    xs: ArrayView2<'_, f64>,
    ys: ArrayView2<'_, f64>,
    exponent: CostExponent,
) -> Result<CostMatrix> {
    if xs.ncols() != ys.ncols() {
        return Err(LotError::DimensionError {
            expected: xs.ncols(),
            found: ys.ncols(),
        });
    }
    let mut entries = Array2::<f64>::zeros((xs.nrows(), ys.nrows()));
    for (i, x) in xs.rows().into_iter().enumerate() {
        for (j, y) in ys.rows().into_iter().enumerate() {
            let sq: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            entries[[i, j]] = match exponent {
                CostExponent::Two => sq,
                CostExponent::One => sq.sqrt(),
            };
        }
    }
    CostMatrix::new(entries, exponent)
}

pub(crate) fn check_marginals(
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
    cost: &CostMatrix,
) -> Result<()> {
    let (m, n) = cost.dim();
    if a.len() != m || b.len() != n {
        return Err(LotError::InvalidMarginals(format!(
            "cost matrix is {m}x{n} but marginals have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    check_masses("source", a)?;
    check_masses("target", b)
}

fn check_masses(name: &str, w: ArrayView1<'_, f64>) -> Result<()> {
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(LotError::InvalidMarginals(format!(
            "{name} masses must be finite and nonnegative"
        )));
    }
    let total = w.sum();
    if (total - 1.0).abs() > MASS_SUM_TOL {
        return Err(LotError::InvalidMarginals(format!(
            "{name} masses sum to {total}, expected 1"
        )));
    }
    Ok(())
}

/// Optimal plan of the transportation linear program, by network simplex.
///
/// Pivoting is deterministic in the input order, so ties between optimal vertices always resolve
/// the same way for the same input.
pub fn solve_exact(
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
    cost: &CostMatrix,
) -> Result<TransportPlan> {
    check_marginals(a, b, cost)?;
    let (m, n) = cost.dim();
    let entries: Vec<f64> = cost.entries.iter().copied().collect();
    let supply = a.to_vec();
    let demand = b.to_vec();
    let max_pivots = 1000 + 50 * (m * n).max(m + n) * ((m + n) as f64).log2().ceil() as usize;
    let solution = network_simplex::solve(&supply, &demand, &entries, 1e-8, max_pivots).map_err(
        |f| match f {
            network_simplex::SimplexFailure::Infeasible(r) => {
                LotError::InvalidMarginals(format!("no feasible plan (residual {r:e})"))
            }
            network_simplex::SimplexFailure::PivotLimit(p) => {
                LotError::SolverFailure(format!("network simplex exceeded {p} pivots"))
            }
        },
    )?;
    let coupling = Array2::from_shape_vec((m, n), solution.flow)
        .expect("flow has m*n entries")
        .mapv(|x| x.max(0.0));
    Ok(TransportPlan::from_parts(coupling, cost, Method::Exact))
}

/// Solves with the requested method.
pub fn solve(
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
    cost: &CostMatrix,
    method: &Method,
) -> Result<TransportPlan> {
    match method {
        Method::Exact => solve_exact(a, b, cost),
        Method::Sinkhorn(cfg) => solve_sinkhorn(a, b, cost, cfg),
    }
}

/// Row `i` of the result is `sum_j G~_ij y_j` with `G~ = diag(G 1 + eps)^-1 G`.
pub fn barycentric_projection(
    plan: &TransportPlan,
    target_points: ArrayView2<'_, f64>,
    eps: f64,
) -> Result<Array2<f64>> {
    project_coupling(plan.coupling.view(), target_points, eps)
}

pub(crate) fn project_coupling(
    coupling: ArrayView2<'_, f64>,
    target_points: ArrayView2<'_, f64>,
    eps: f64,
) -> Result<Array2<f64>> {
    if coupling.ncols() != target_points.nrows() {
        return Err(LotError::DimensionError {
            expected: coupling.ncols(),
            found: target_points.nrows(),
        });
    }
    let row_mass = coupling.sum_axis(ndarray::Axis(1));
    let mut out = coupling.dot(&target_points);
    for (mut row, r) in out.rows_mut().into_iter().zip(row_mass.iter()) {
        row /= r + eps;
    }
    Ok(out)
}

/// `W_2` distance: square root of the optimal squared-Euclidean transport cost.
pub fn w2_distance(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    method: &Method,
) -> Result<f64> {
    let cost = cost_matrix(source, target, CostExponent::Two)?;
    let plan = solve(source.masses(), target.masses(), &cost, method)?;
    Ok(plan.objective().max(0.0).sqrt())
}

/// Transport cost and plan under squared Euclidean cost; shorthand used by the barycenter code.
pub(crate) fn exact_plan(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
) -> Result<TransportPlan> {
    let cost = cost_matrix(source, target, CostExponent::Two)?;
    solve_exact(source.masses(), target.masses(), &cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::uniform_measure;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn three_four_five() {
        let s = uniform_measure(array![[0.0, 0.0]]).unwrap();
        let t = uniform_measure(array![[3.0, 4.0]]).unwrap();
        let c = cost_matrix(&s, &t, CostExponent::Two).unwrap();
        assert_eq!(c.entries(), array![[25.0]]);
        let c1 = cost_matrix(&s, &t, CostExponent::One).unwrap();
        assert_eq!(c1.entries(), array![[5.0]]);
    }

    #[test]
    fn self_cost_has_zero_diagonal() {
        let s = uniform_measure(array![[0.0, 1.0], [2.0, -1.0]]).unwrap();
        let c = cost_matrix(&s, &s, CostExponent::Two).unwrap();
        assert_eq!(c.entries()[[0, 0]], 0.0);
        assert_eq!(c.entries()[[1, 1]], 0.0);
        assert_eq!(c.entries()[[0, 1]], 8.0);
    }

    #[test]
    fn cost_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs = random_points(&mut rng, 3, 2);
        let ys = random_points(&mut rng, 4, 2);
        let c = point_cost_matrix(xs.view(), ys.view(), CostExponent::Two).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let dx = xs[[i, 0]] - ys[[j, 0]];
                let dy = xs[[i, 1]] - ys[[j, 1]];
                assert!((c.entries()[[i, j]] - (dx * dx + dy * dy)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let s = uniform_measure(array![[0.0, 0.0]]).unwrap();
        let t = uniform_measure(array![[0.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(
            cost_matrix(&s, &t, CostExponent::Two),
            Err(LotError::DimensionError { .. })
        ));
    }

    #[test]
    fn exact_rejects_bad_inputs() {
        let c = CostMatrix::new(array![[1.0, 2.0], [3.0, 4.0]], CostExponent::Two).unwrap();
        let r = solve_exact(array![0.5, 0.5].view(), array![0.5, 0.6].view(), &c);
        assert!(matches!(r, Err(LotError::InvalidMarginals(_))));
        assert!(matches!(
            CostMatrix::new(array![[f64::INFINITY]], CostExponent::Two),
            Err(LotError::InvalidCost(_))
        ));
    }

    #[test]
    fn projection_of_permutation_reorders_targets() {
        let coupling = array![[0.0, 0.5], [0.5, 0.0]];
        let ys = array![[1.0, 1.0], [-2.0, 3.0]];
        let t = project_coupling(coupling.view(), ys.view(), 0.0).unwrap();
        assert_eq!(t, array![[-2.0, 3.0], [1.0, 1.0]]);
    }

    #[test]
    fn projection_merges_into_single_target() {
        let coupling = array![[0.5], [0.5]];
        let ys = array![[4.0, -1.0]];
        let t = project_coupling(coupling.view(), ys.view(), PROJECTION_EPS).unwrap();
        for row in t.rows() {
            assert!((row[0] - 4.0).abs() < 1e-10 && (row[1] + 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn projection_matches_weighted_average_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let coupling = Array2::from_shape_fn((4, 5), |_| rng.gen_range(0.0..1.0));
        let ys = random_points(&mut rng, 5, 3);
        let t = project_coupling(coupling.view(), ys.view(), 1e-12).unwrap();
        for i in 0..4 {
            let total: f64 = (0..5).map(|j| coupling[[i, j]]).sum::<f64>() + 1e-12;
            for k in 0..3 {
                let v: f64 = (0..5).map(|j| coupling[[i, j]] * ys[[j, k]]).sum::<f64>() / total;
                assert!((t[[i, k]] - v).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn w2_basic_cases() {
        let a = uniform_measure(array![[1.0, 2.0]]).unwrap();
        let b = uniform_measure(array![[4.0, 6.0]]).unwrap();
        assert!((w2_distance(&a, &b, &Method::Exact).unwrap() - 5.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = uniform_measure(random_points(&mut rng, 7, 2)).unwrap();
        assert!(w2_distance(&c, &c, &Method::Exact).unwrap() <= 1e-9);
    }

    #[test]
    fn plan_csv_header() {
        let c = CostMatrix::new(array![[1.0, 2.0]], CostExponent::Two).unwrap();
        assert!(c.to_csv().starts_with("1,2,2\n1,2\n"));
        let plan = solve_exact(array![1.0].view(), array![0.5, 0.5].view(), &c).unwrap();
        assert!(plan.to_csv().starts_with("1,2,exact\n0.5,0.5\n"));
    }
}
