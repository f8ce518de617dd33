//! Refine the reference toward the data barycenter and watch the class barycenters settle.

use lot::embedding::{compute_barycenter_embeddings, EmbedOptions};
use lot::measures::{synthetic_dataset, SyntheticSpec};
use lot::transport::{w2_distance, Method};

fn main() -> lot::Result<()> {
    let data = synthetic_dataset(&SyntheticSpec {
        classes: 2,
        clouds_per_class: 5,
        points_per_cloud: 80,
        dim: 2,
        seed: 3,
        translate_only: false,
    })?;
    let opts = EmbedOptions::new(Method::Exact, true);
    let trace = compute_barycenter_embeddings(3, &data, &opts, 100, 11)?;
    for (j, record) in trace.iterations.iter().enumerate() {
        let cost: f64 = record.transport_costs().iter().sum();
        print!("iteration {j}: total transport cost {cost:.4}");
        if j > 0 {
            let prev = &trace.iterations[j - 1];
            let moved = w2_distance(prev.reference(), record.reference(), &Method::Exact)?;
            print!(", reference moved {moved:.4}");
        }
        println!();
    }
    Ok(())
}
