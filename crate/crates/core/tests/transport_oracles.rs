//! Independent checks of the exact and entropic solvers.

use lot::measures::{uniform_measure, DiscreteMeasure};
use lot::transport::{
    cost_matrix, solve_exact, solve_sinkhorn, w2_distance, CostExponent, CostMatrix, Method,
    SinkhornConfig,
};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

/// Minimum over all permutation plans with uniform masses.
fn brute_force_assignment(c: &Array2<f64>) -> f64 {
    let n = c.nrows();
    permutations(n)
        .iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum::<f64>() / n as f64)
        .fold(f64::INFINITY, f64::min)
}

/// Monotone (quantile) coupling cost of two uniform 1D samples.
fn sorted_coupling_cost(xs: &[f64], ys: &[f64]) -> f64 {
    let mut xs = xs.to_vec();
    let mut ys = ys.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (m, n) = (xs.len(), ys.len());
    let (wa, wb) = (1.0 / m as f64, 1.0 / n as f64);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (wa, wb);
    let mut total = 0.0;
    while i < m && j < n {
        let mass = ra.min(rb);
        total += mass * (xs[i] - ys[j]).powi(2);
        ra -= mass;
        rb -= mass;
        if ra <= 1e-15 {
            i += 1;
            ra = wa;
        }
        if rb <= 1e-15 {
            j += 1;
            rb = wb;
        }
    }
    total
}

fn uniform(n: usize) -> Array1<f64> {
    Array1::from_elem(n, 1.0 / n as f64)
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DiscreteMeasure {
    uniform_measure(Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0))).unwrap()
}

#[test]
fn exact_matches_exhaustive_permutations() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..200 {
        let n = rng.gen_range(1..=5);
        let c = Array2::from_shape_fn((n, n), |_| rng.gen_range(0.0..10.0));
        let cost = CostMatrix::new(c.clone(), CostExponent::Two).unwrap();
        let plan = solve_exact(uniform(n).view(), uniform(n).view(), &cost).unwrap();
        let best = brute_force_assignment(&c);
        assert!(
            (plan.objective() - best).abs() <= 1e-9 * best.abs().max(1e-12),
            "{} vs {best}",
            plan.objective()
        );
    }
}

#[test]
fn exact_matches_sorting_in_one_dimension() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for _ in 0..100 {
        let m = rng.gen_range(1..=200);
        let n = rng.gen_range(1..=200);
        let xs: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..5.0)).collect();
        let a = uniform_measure(Array2::from_shape_vec((m, 1), xs.clone()).unwrap()).unwrap();
        let b = uniform_measure(Array2::from_shape_vec((n, 1), ys.clone()).unwrap()).unwrap();
        let cost = cost_matrix(&a, &b, CostExponent::Two).unwrap();
        let plan = solve_exact(a.masses(), b.masses(), &cost).unwrap();
        let oracle = sorted_coupling_cost(&xs, &ys);
        assert!(
            (plan.objective() - oracle).abs() <= 1e-9 * oracle.max(1e-12),
            "m={m} n={n}: {} vs {oracle}",
            plan.objective()
        );
    }
}

#[test]
fn square_uniform_plans_are_permutations() {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    for _ in 0..50 {
        let n = rng.gen_range(2..=40);
        let a = random_cloud(&mut rng, n, 3);
        let b = random_cloud(&mut rng, n, 3);
        let cost = cost_matrix(&a, &b, CostExponent::Two).unwrap();
        let plan = solve_exact(a.masses(), b.masses(), &cost).unwrap();
        let g = plan.coupling();
        for row in g.rows() {
            let nz: Vec<f64> = row.iter().copied().filter(|&x| x > 1e-12).collect();
            assert_eq!(nz.len(), 1);
            assert!((nz[0] - 1.0 / n as f64).abs() <= 1e-9);
        }
        for col in g.columns() {
            assert_eq!(col.iter().filter(|&&x| x > 1e-12).count(), 1);
        }
    }
}

/// Complementary slackness certificate: recover potentials from the support of the plan and
/// check reduced costs are nonnegative everywhere.
fn assert_dual_certificate(c: &Array2<f64>, g: &Array2<f64>) {
    let (m, n) = c.dim();
    let mut u = vec![f64::NAN; m];
    let mut v = vec![f64::NAN; n];
    let support: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| g[[i, j]] > 1e-14)
        .collect();
    // the support graph of a basic solution is a forest; fix one potential per component
    loop {
        let mut progressed = false;
        for &(i, j) in &support {
            if u[i].is_nan() && !v[j].is_nan() {
                u[i] = c[[i, j]] - v[j];
                progressed = true;
            } else if v[j].is_nan() && !u[i].is_nan() {
                v[j] = c[[i, j]] - u[i];
                progressed = true;
            }
        }
        if !progressed {
            if let Some(i) = (0..m).find(|&i| u[i].is_nan()) {
                u[i] = 0.0;
            } else if let Some(j) = (0..n).find(|&j| v[j].is_nan()) {
                v[j] = 0.0;
            } else {
                break;
            }
        }
    }
    let scale = c.iter().fold(0.0f64, |a, &b| a.max(b)).max(1.0);
    for &(i, j) in &support {
        assert!((c[[i, j]] - u[i] - v[j]).abs() <= 1e-9 * scale);
    }
    // degenerate forests leave some freedom; only check when the support is a spanning tree
    if support.len() == m + n - 1 {
        for i in 0..m {
            for j in 0..n {
                assert!(
                    c[[i, j]] - u[i] - v[j] >= -1e-9 * scale,
                    "reduced cost at ({i},{j})"
                );
            }
        }
    }
}

#[test]
fn exact_plans_carry_dual_certificates() {
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    for _ in 0..60 {
        let m = rng.gen_range(1..=30);
        let n = rng.gen_range(1..=30);
        let mut a: Array1<f64> = Array1::from_shape_fn(m, |_| rng.gen_range(0.1..1.0));
        let mut b: Array1<f64> = Array1::from_shape_fn(n, |_| rng.gen_range(0.1..1.0));
        a /= a.sum();
        b /= b.sum();
        let c = Array2::from_shape_fn((m, n), |_| rng.gen_range(0.0..5.0));
        let cost = CostMatrix::new(c.clone(), CostExponent::Two).unwrap();
        let plan = solve_exact(a.view(), b.view(), &cost).unwrap();
        assert!(plan.marginal_violation(a.view(), b.view()) <= 1e-9);
        assert!(plan.coupling().iter().all(|&x| x >= 0.0));
        assert_dual_certificate(&c, &plan.coupling().to_owned());
        let recomputed = (&plan.coupling() * &c).sum();
        assert!((recomputed - plan.objective()).abs() <= 1e-9 * recomputed.abs().max(1e-12));
    }
}

#[test]
fn solver_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let a = random_cloud(&mut rng, 60, 2);
    let b = random_cloud(&mut rng, 45, 2);
    let cost = cost_matrix(&a, &b, CostExponent::Two).unwrap();
    let p1 = solve_exact(a.masses(), b.masses(), &cost).unwrap();
    let p2 = solve_exact(a.masses(), b.masses(), &cost).unwrap();
    assert_eq!(p1, p2);
}

#[test]
fn w2_metric_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    for _ in 0..100 {
        let nx = rng.gen_range(1..12);
        let x = random_cloud(&mut rng, nx, 2);
        let ny = rng.gen_range(1..12);
        let y = random_cloud(&mut rng, ny, 2);
        let nz = rng.gen_range(1..12);
        let z = random_cloud(&mut rng, nz, 2);
        let xy = w2_distance(&x, &y, &Method::Exact).unwrap();
        let yx = w2_distance(&y, &x, &Method::Exact).unwrap();
        let yz = w2_distance(&y, &z, &Method::Exact).unwrap();
        let xz = w2_distance(&x, &z, &Method::Exact).unwrap();
        assert!(xy > 0.0);
        assert!((xy - yx).abs() <= 1e-9);
        assert!(xz <= xy + yz + 1e-7);
    }
}

#[test]
fn w2_of_translate_is_shift_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    for _ in 0..20 {
        let x = random_cloud(&mut rng, 25, 3);
        let v = Array1::from_shape_fn(3, |_| rng.gen_range(-4.0..4.0));
        let y = x.translated(v.view()).unwrap();
        let w = w2_distance(&x, &y, &Method::Exact).unwrap();
        let norm = v.dot(&v).sqrt();
        assert!((w - norm).abs() <= 1e-9 * norm.max(1.0), "{w} vs {norm}");
    }
}

/// Fixture for the entropic checks: a 12-point unit ring and a jittered translate of it,
/// costs rescaled to median 1.
fn sinkhorn_fixture() -> (Array1<f64>, Array1<f64>, CostMatrix) {
    let n = 12;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ring = Array2::from_shape_fn((n, 2), |(i, k)| {
        let t = std::f64::consts::TAU * i as f64 / n as f64;
        if k == 0 {
            t.cos()
        } else {
            t.sin()
        }
    });
    let moved = Array2::from_shape_fn((n, 2), |(i, k)| {
        ring[[i, k]] + if k == 0 { 1.5 } else { 0.0 } + rng.gen_range(-0.05..0.05)
    });
    let a = uniform_measure(ring).unwrap();
    let b = uniform_measure(moved).unwrap();
    let raw = cost_matrix(&a, &b, CostExponent::Two).unwrap();
    let med = raw.median();
    let cost = CostMatrix::new(raw.entries().mapv(|c| c / med), CostExponent::Two).unwrap();
    (a.masses().to_owned(), b.masses().to_owned(), cost)
}

#[test]
fn sinkhorn_cost_decreases_toward_exact() {
    let (a, b, cost) = sinkhorn_fixture();
    let exact = solve_exact(a.view(), b.view(), &cost).unwrap().objective();
    let mut previous = f64::INFINITY;
    for lambda in [0.5, 0.1, 0.02] {
        let cfg = SinkhornConfig {
            lambda,
            ..SinkhornConfig::default()
        };
        let plan = solve_sinkhorn(a.view(), b.view(), &cost, &cfg).unwrap();
        assert!(plan.marginal_violation(a.view(), b.view()) <= 1e-6);
        assert!(plan.objective() < previous);
        assert!(plan.objective() >= exact - 1e-9);
        previous = plan.objective();
    }
    assert!((previous - exact) / exact <= 0.01, "{previous} vs {exact}");
}

#[test]
fn sinkhorn_self_transport_concentrates_on_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let x = random_cloud(&mut rng, 15, 2);
    let cost = cost_matrix(&x, &x, CostExponent::Two).unwrap();
    let cfg = SinkhornConfig {
        lambda: 1e-3 * cost.median(),
        ..SinkhornConfig::default()
    };
    let plan = solve_sinkhorn(x.masses(), x.masses(), &cost, &cfg).unwrap();
    let diagonal: f64 = (0..15).map(|i| plan.coupling()[[i, i]]).sum();
    assert!(
        1.0 - diagonal <= 0.05,
        "off-diagonal mass {}",
        1.0 - diagonal
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_plan_is_feasible(
        m in 1usize..12,
        n in 1usize..12,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a: Array1<f64> = Array1::from_shape_fn(m, |_| rng.gen_range(0.01..1.0));
        let mut b: Array1<f64> = Array1::from_shape_fn(n, |_| rng.gen_range(0.01..1.0));
        a /= a.sum();
        b /= b.sum();
        let c = Array2::from_shape_fn((m, n), |_| rng.gen_range(0.0..3.0));
        let cost = CostMatrix::new(c, CostExponent::Two).unwrap();
        let plan = solve_exact(a.view(), b.view(), &cost).unwrap();
        prop_assert!(plan.marginal_violation(a.view(), b.view()) <= 1e-6);
        prop_assert!(plan.coupling().iter().all(|&x| x >= 0.0));
    }
}
