//! Embed a small synthetic dataset and compare LOT distances with exact W2.

use lot::embedding::{embed_point_clouds, lot_distance};
use lot::measures::{fitted_gaussian_reference, synthetic_dataset, SyntheticSpec};
use lot::transport::{w2_distance, Method};

fn main() -> lot::Result<()> {
    let data = synthetic_dataset(&SyntheticSpec {
        classes: 2,
        clouds_per_class: 3,
        points_per_cloud: 120,
        dim: 2,
        seed: 1,
        translate_only: false,
    })?;
    let reference = fitted_gaussian_reference(data.clouds(), 150, 7)?;
    let set = embed_point_clouds(&reference, &data, &Method::Exact, true)?;
    println!(
        "{} clouds -> {:?} embedding matrix",
        data.len(),
        set.rows().dim()
    );

    println!("{:>4} {:>4} {:>10} {:>10}", "i", "j", "lot", "w2");
    for i in 0..data.len() {
        for j in i + 1..data.len() {
            let lot = lot_distance(&set.embedding(i), &set.embedding(j), reference.masses())?;
            let w2 = w2_distance(&data.clouds()[i], &data.clouds()[j], &Method::Exact)?;
            println!("{i:>4} {j:>4} {lot:>10.4} {w2:>10.4}");
        }
    }
    Ok(())
}
