//! PCA and LDA of LOT embeddings, with the Fisher ratio of each leading direction.

use lot::embedding::embed_point_clouds;
use lot::measures::{fitted_gaussian_reference, synthetic_dataset, SyntheticSpec};
use lot::reduction::{fisher_ratio, lda_reduction, pca_reduction};
use lot::transport::Method;

fn main() -> lot::Result<()> {
    let data = synthetic_dataset(&SyntheticSpec {
        classes: 3,
        clouds_per_class: 8,
        points_per_cloud: 100,
        dim: 2,
        seed: 2,
        translate_only: false,
    })?;
    let reference = fitted_gaussian_reference(data.clouds(), 120, 2)?;
    let set = embed_point_clouds(&reference, &data, &Method::Exact, true)?;

    let (pca, balanced) = pca_reduction(set.rows(), set.labels(), 0)?;
    let explained = pca.explained_variance();
    let total: f64 = explained.sum();
    for (k, v) in explained.iter().take(4).enumerate() {
        println!("pc{} explains {:.1}%", k + 1, 100.0 * v / total);
    }

    let (lda, projected, labels) = lda_reduction(set.rows(), set.labels(), 2, 0)?;
    println!(
        "lda kept {} components, notices {:?}",
        projected.ncols(),
        lda.notices
    );
    let pca_ratio = fisher_ratio(balanced.rows.view(), &labels, pca.components.row(0));
    let lda_ratio = fisher_ratio(balanced.rows.view(), &labels, lda.projection.column(0));
    println!("fisher ratio: pca {pca_ratio:.3e}, lda {lda_ratio:.3e}");
    for (row, label) in projected.rows().into_iter().zip(&labels).step_by(4) {
        println!("{label:<6} {:>8.3} {:>8.3}", row[0], row[1]);
    }
    Ok(())
}
