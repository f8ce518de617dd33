//! Split, oversample each side, and let cross-validation pick a classifier.

use lot::classify::{get_best_classifier, stratified_split};
use lot::embedding::embed_point_clouds;
use lot::measures::{fitted_gaussian_reference, synthetic_dataset, SyntheticSpec};
use lot::reduction::balance;
use lot::transport::Method;
use ndarray::Axis;

fn main() -> lot::Result<()> {
    let data = synthetic_dataset(&SyntheticSpec {
        points_per_cloud: 100,
        ..SyntheticSpec::default()
    })?;
    let reference = fitted_gaussian_reference(data.clouds(), 150, 0)?;
    let set = embed_point_clouds(&reference, &data, &Method::Exact, true)?;

    let (train, test) = stratified_split(set.labels(), 0.2, 1)?;
    let side = |idx: &[usize], seed| {
        let rows = set.rows().select(Axis(0), idx);
        let labels: Vec<String> = idx.iter().map(|&i| set.labels()[i].clone()).collect();
        balance(rows.view(), &labels, seed)
    };
    let train = side(&train, 2)?;
    let test = side(&test, 3)?;
    let report = get_best_classifier(
        train.rows.view(),
        &train.labels,
        test.rows.view(),
        &test.labels,
        4,
    )?;
    print!("{}", report.to_table());
    Ok(())
}
