//! Within- and between-class LOT barycenters, scored against true barycenters.

use lot::barycenter::{
    generate_barycenters_between_classes, generate_barycenters_within_class, mean_std,
    relative_error, WeightVector, WithinWeights,
};
use lot::embedding::embed_point_clouds;
use lot::measures::{fitted_gaussian_reference, synthetic_dataset, SyntheticSpec};
use lot::transport::Method;

fn main() -> lot::Result<()> {
    let data = synthetic_dataset(&SyntheticSpec {
        classes: 2,
        clouds_per_class: 4,
        points_per_cloud: 80,
        dim: 2,
        seed: 5,
        translate_only: true,
    })?;
    let reference = fitted_gaussian_reference(data.clouds(), 120, 5)?;
    let set = embed_point_clouds(&reference, &data, &Method::Exact, true)?;

    let within = generate_barycenters_within_class(&set, &WithinWeights::Random(5), 9)?;
    for class in set.classes() {
        let deltas = within
            .iter()
            .filter(|r| r.label == class)
            .map(|r| {
                let clouds: Vec<_> = r
                    .source_indices
                    .iter()
                    .map(|&i| data.clouds()[i].clone())
                    .collect();
                relative_error(&set, &r.source_indices, &r.weights, &clouds, 5)
            })
            .collect::<lot::Result<Vec<_>>>()?;
        let (mean, std) = mean_std(&deltas);
        println!(
            "{class:<6} delta {mean:.4} +/- {std:.4} over {} weights",
            deltas.len()
        );
    }

    let pair = [(set.classes()[0].clone(), set.classes()[1].clone())];
    let sweep: Vec<WeightVector> = (0..=4)
        .map(|k| WeightVector::new(vec![1.0 - k as f64 / 4.0, k as f64 / 4.0]))
        .collect::<lot::Result<_>>()?;
    for r in generate_barycenters_between_classes(&set, &pair, Some(&sweep), 1)? {
        println!(
            "{} {:?} mean point {:?}",
            r.label,
            r.weights.as_slice(),
            r.cloud.mean().to_vec()
        );
    }
    Ok(())
}
