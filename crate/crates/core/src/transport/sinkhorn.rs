//! Entropically regularized transport by alternating scaling.
//!
//! The plan is `G = diag(u) K diag(v)` with `K = exp(-M / lambda)`. When `lambda` is small
//! relative to the costs the kernel underflows, so below `LOG_DOMAIN_RATIO * median(M)` the
//! iteration runs on dual potentials `f = lambda ln u`, `g = lambda ln v` instead, warm started
//! by a short schedule of halving `lambda` from the median cost.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::{check_marginals, CostMatrix, Method, TransportPlan, PLAN_MARGINAL_TOL};
use crate::error::{LotError, Result};

/// Log-domain iterations are used when `lambda <= LOG_DOMAIN_RATIO * median(M)`.
pub const LOG_DOMAIN_RATIO: f64 = 0.05;

/// Marginals are checked every this many scaling rounds.
const CHECK_EVERY: usize = 10;

const WARM_ROUNDS: usize = 50;
const WARM_FACTOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinkhornConfig {
    pub lambda: f64,
    pub max_iters: usize,
    pub marginal_tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        SinkhornConfig {
            lambda: 1.0,
            max_iters: 10_000,
            marginal_tol: 1e-9,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(LotError::InvalidParameter(format!(
                "sinkhorn lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.max_iters == 0 {
            return Err(LotError::InvalidParameter(
                "max_iters must be at least 1".into(),
            ));
        }
        if !(self.marginal_tol > 0.0) {
            return Err(LotError::InvalidParameter(
                "marginal_tol must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub fn solve_sinkhorn(
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
    cost: &CostMatrix,
    cfg: &SinkhornConfig,
) -> Result<TransportPlan> {
    cfg.validate()?;
    check_marginals(a, b, cost)?;
    let log_domain = cfg.lambda <= LOG_DOMAIN_RATIO * cost.median();
    let outcome = if log_domain {
        log_scaling(a, b, cost, cfg)
    } else {
        plain_scaling(a, b, cost, cfg)?
    };
    let plan = TransportPlan::from_parts(outcome.coupling, cost, Method::Sinkhorn(*cfg));
    // the tolerance is a target; a best iterate within the plan acceptance bound is still usable
    if outcome.converged || outcome.violation <= PLAN_MARGINAL_TOL.max(cfg.marginal_tol) {
        Ok(plan)
    } else {
        Err(LotError::NonConvergence {
            iterations: outcome.iterations,
            violation: outcome.violation,
            best: Box::new(plan),
        })
    }
}

struct Outcome {
    coupling: Array2<f64>,
    converged: bool,
    iterations: usize,
    violation: f64,
}

/// Row-sum violation; columns are exact right after the `v` update.
fn row_violation(coupling: &Array2<f64>, a: ArrayView1<'_, f64>) -> f64 {
    coupling
        .rows()
        .into_iter()
        .zip(a.iter())
        .map(|(row, &ai)| (row.sum() - ai).abs())
        .fold(0.0, f64::max)
}

fn plain_scaling(
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
    cost: &CostMatrix,
    cfg: &SinkhornConfig,
) -> Result<Outcome> {
    let (m, n) = cost.dim();
    let kernel = cost.entries().mapv(|c| (-c / cfg.lambda).exp());
    let mut u = vec![1.0; m];
    let mut v = vec![1.0; n];
    let mut best: Option<(f64, Array2<f64>)> = None;

    let assemble =
        |u: &[f64], v: &[f64]| Array2::from_shape_fn((m, n), |(i, j)| u[i] * kernel[[i, j]] * v[j]);

    for it in 1..=cfg.max_iters {
        for i in 0..m {
            let kv: f64 = (0..n).map(|j| kernel[[i, j]] * v[j]).sum();
            if !(kv > 0.0) || !kv.is_finite() {
                return Err(LotError::KernelUnderflow { lambda: cfg.lambda });
            }
            u[i] = a[i] / kv;
        }
        for j in 0..n {
            let ktu: f64 = (0..m).map(|i| kernel[[i, j]] * u[i]).sum();
            if !(ktu > 0.0) || !ktu.is_finite() {
                return Err(LotError::KernelUnderflow { lambda: cfg.lambda });
            }
            v[j] = b[j] / ktu;
        }
        if it % CHECK_EVERY == 0 || it == cfg.max_iters {
            let coupling = assemble(&u, &v);
            let violation = row_violation(&coupling, a);
            if !violation.is_finite() {
                return Err(LotError::KernelUnderflow { lambda: cfg.lambda });
            }
            if violation <= cfg.marginal_tol {
                return Ok(Outcome {
                    coupling,
                    converged: true,
                    iterations: it,
                    violation,
                });
            }
            if best.as_ref().map_or(true, |(bv, _)| violation < *bv) {
                best = Some((violation, coupling));
            }
        }
    }
    let (violation, coupling) = best.expect("at least one check ran");
    Ok(Outcome {
        coupling,
        converged: false,
        iterations: cfg.max_iters,
        violation,
    })
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn half_steps(
    rows: &[f64],
    cols: &[f64],
    log_a: &[f64],
    log_b: &[f64],
    f: &mut [f64],
    g: &mut [f64],
    lambda: f64,
) {
    let (m, n) = (f.len(), g.len());
    for i in 0..m {
        let row = &rows[i * n..(i + 1) * n];
        let lse = log_sum_exp(
            row.iter()
                .zip(g.iter())
                .map(|(cij, gj)| (gj - cij) / lambda),
        );
        f[i] = lambda * (log_a[i] - lse);
    }
    for j in 0..n {
        let col = &cols[j * m..(j + 1) * m];
        let lse = log_sum_exp(
            col.iter()
                .zip(f.iter())
                .map(|(cij, fi)| (fi - cij) / lambda),
        );
        g[j] = lambda * (log_b[j] - lse);
    }
}

fn log_scaling(
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
    cost: &CostMatrix,
    cfg: &SinkhornConfig,
) -> Outcome {
    let (m, n) = cost.dim();
    let lambda = cfg.lambda;
    let c = cost.entries();
    // row-major and column-major copies keep both half-steps cache friendly
    let rows: Vec<f64> = c.iter().copied().collect();
    let cols: Vec<f64> = c.t().iter().copied().collect();
    let log_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|x| x.ln()).collect();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut best: Option<(f64, Array2<f64>)> = None;

    // warm start: a few rounds at geometrically decreasing lambda seed the potentials
    let mut stage_lambda = cost.median();
    while stage_lambda > lambda {
        for _ in 0..WARM_ROUNDS {
            half_steps(&rows, &cols, &log_a, &log_b, &mut f, &mut g, stage_lambda);
        }
        stage_lambda *= WARM_FACTOR;
    }

    let assemble = |f: &[f64], g: &[f64]| {
        Array2::from_shape_fn((m, n), |(i, j)| {
            ((f[i] + g[j] - rows[i * n + j]) / lambda).exp()
        })
    };

    for it in 1..=cfg.max_iters {
        half_steps(&rows, &cols, &log_a, &log_b, &mut f, &mut g, lambda);
        if it % CHECK_EVERY == 0 || it == cfg.max_iters {
            let coupling = assemble(&f, &g);
            let violation = row_violation(&coupling, a);
            if violation <= cfg.marginal_tol {
                return Outcome {
                    coupling,
                    converged: true,
                    iterations: it,
                    violation,
                };
            }
            if best.as_ref().map_or(true, |(bv, _)| violation < *bv) {
                best = Some((violation, coupling));
            }
        }
    }
    let (violation, coupling) = best.expect("at least one check ran");
    Outcome {
        coupling,
        converged: false,
        iterations: cfg.max_iters,
        violation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{solve_exact, CostExponent};
    use ndarray::{array, Array1};

    fn uniform(n: usize) -> Array1<f64> {
        Array1::from_elem(n, 1.0 / n as f64)
    }

    #[test]
    fn marginals_hold_in_both_regimes() {
        let c = CostMatrix::new(
            array![[0.0, 1.0, 4.0], [1.0, 0.0, 1.0], [4.0, 1.0, 0.0]],
            CostExponent::Two,
        )
        .unwrap();
        let a = array![0.2, 0.5, 0.3];
        let b = uniform(3);
        for lambda in [2.0, 0.5, 0.02] {
            let cfg = SinkhornConfig {
                lambda,
                ..SinkhornConfig::default()
            };
            let plan = solve_sinkhorn(a.view(), b.view(), &c, &cfg).unwrap();
            assert!(
                plan.marginal_violation(a.view(), b.view()) <= 1e-6,
                "lambda {lambda}"
            );
        }
    }

    #[test]
    fn small_lambda_approaches_exact() {
        let c = CostMatrix::new(array![[0.0, 2.0], [2.0, 0.5]], CostExponent::Two).unwrap();
        let a = uniform(2);
        let exact = solve_exact(a.view(), a.view(), &c).unwrap();
        let cfg = SinkhornConfig {
            lambda: 0.01,
            ..SinkhornConfig::default()
        };
        let plan = solve_sinkhorn(a.view(), a.view(), &c, &cfg).unwrap();
        assert!((plan.objective() - exact.objective()).abs() < 1e-6);
    }

    #[test]
    fn invalid_config_rejected() {
        let c = CostMatrix::new(array![[0.0]], CostExponent::Two).unwrap();
        let a = array![1.0];
        let cfg = SinkhornConfig {
            lambda: 0.0,
            ..SinkhornConfig::default()
        };
        assert!(matches!(
            solve_sinkhorn(a.view(), a.view(), &c, &cfg),
            Err(LotError::InvalidParameter(_))
        ));
    }

    #[test]
    fn plain_kernel_underflow_is_reported() {
        // median is 0, so the log-domain switch does not trigger, but every off-diagonal
        // kernel entry underflows and the second row has no finite partner
        let c = CostMatrix::new(
            array![[0.0, 0.0, 1e6], [1e6, 1e6, 1e6], [0.0, 0.0, 0.0]],
            CostExponent::Two,
        )
        .unwrap();
        let a = uniform(3);
        let cfg = SinkhornConfig {
            lambda: 1.0,
            ..SinkhornConfig::default()
        };
        assert!(matches!(
            solve_sinkhorn(a.view(), a.view(), &c, &cfg),
            Err(LotError::KernelUnderflow { .. })
        ));
    }

    #[test]
    fn non_convergence_returns_best_iterate() {
        let c = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]], CostExponent::Two).unwrap();
        let a = array![0.3, 0.7];
        let b = array![0.6, 0.4];
        let cfg = SinkhornConfig {
            lambda: 5.0,
            max_iters: 1,
            marginal_tol: 1e-15,
        };
        match solve_sinkhorn(a.view(), b.view(), &c, &cfg) {
            Err(LotError::NonConvergence {
                iterations, best, ..
            }) => {
                assert_eq!(iterations, 1);
                assert_eq!(best.coupling().dim(), (2, 2));
            }
            other => panic!("expected NonConvergence, got {other:?}"),
        }
    }
}
