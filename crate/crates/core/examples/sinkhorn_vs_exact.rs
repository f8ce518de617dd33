//! Entropic plans approach the exact plan as lambda shrinks, and blur the LOT pushforward.

use lot::embedding::{coordinate_variance, embed_cloud, pushforward};
use lot::measures::{base_shape, fitted_gaussian_reference};
use lot::transport::{cost_matrix, solve, CostExponent, Method};

fn main() -> lot::Result<()> {
    let source = base_shape(0, 80, 2, 3)?;
    let target = base_shape(2, 90, 2, 4)?;
    let cost = cost_matrix(&source, &target, CostExponent::Two)?;
    let exact = solve(source.masses(), target.masses(), &cost, &Method::Exact)?;
    println!("exact cost {:.6}", exact.objective());
    for scale in [1.0, 0.2, 0.05, 0.01] {
        let method = Method::sinkhorn(scale * cost.median());
        let plan = solve(source.masses(), target.masses(), &cost, &method)?;
        println!(
            "lambda {:>8.5}  cost {:.6}  gap {:>6.2}%  marginal violation {:.1e}",
            scale * cost.median(),
            plan.objective(),
            100.0 * (plan.objective() - exact.objective()) / exact.objective(),
            plan.marginal_violation(source.masses(), target.masses()),
        );
    }

    let reference = fitted_gaussian_reference(std::slice::from_ref(&target), 100, 5)?;
    for (name, method) in [
        ("exact", Method::Exact),
        ("sinkhorn", Method::sinkhorn(0.05 * cost.median())),
    ] {
        let e = embed_cloud(&reference, &target, &method, false)?;
        let var = coordinate_variance(&pushforward(&e, reference.masses())?);
        println!("{name:<9} pushforward variance {:.4}", var.sum());
    }
    Ok(())
}
