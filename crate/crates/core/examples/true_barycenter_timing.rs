//! The desk-scale benchmark: LOT barycenters versus the free-support fixed point.

use lot::embedding::EmbedOptions;
use lot::pipeline::{bench_dataset, run_bench, BenchSpec};
use lot::transport::Method;

fn main() -> lot::Result<()> {
    let spec = BenchSpec {
        clouds_per_class: 6,
        points_per_cloud: 120,
        reference_points: 180,
        weights: 4,
        ..BenchSpec::default()
    };
    let data = bench_dataset(&spec, 0)?;
    let report = run_bench(
        &data,
        spec.reference_points,
        &spec,
        &EmbedOptions::new(Method::Exact, true),
        0,
    )?;
    for row in &report.delta {
        println!(
            "{:<6} iteration {} delta {:.4} +/- {:.4}",
            row.class, row.iteration, row.mean, row.std
        );
    }
    for (class, lot, truth) in &report.timings {
        println!("{class:<6} lot {lot:.3}s  true {truth:.3}s");
    }
    println!(
        "total: lot {:.3}s, true {:.3}s",
        report.total_lot_seconds(),
        report.total_true_seconds()
    );
    Ok(())
}
