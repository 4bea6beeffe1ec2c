//! Inputs shared by the benchmarks.

use textgcl::augment::{mock_augment, AugmentationKind};
use textgcl::numerics::{DenseMatrix, Rng};
use textgcl::tag::{generate_synthetic, SyntheticSpec, TextAttributedGraph};
use textgcl::text::{encode_corpus, EmbeddingConfig};

/// SBM graph with `classes * per_class` nodes and its two encoded views.
pub struct Fixture {
    pub graph: TextAttributedGraph,
    pub h: DenseMatrix,
    pub h_aug: DenseMatrix,
}

pub fn fixture(classes: usize, per_class: usize, dimension: usize) -> Fixture {
    let spec = SyntheticSpec {
        classes,
        nodes_per_class: per_class,
        ..SyntheticSpec::desk_fixture()
    };
    let graph = generate_synthetic(&spec, 0).expect("valid spec");
    let cfg = EmbeddingConfig {
        dimension,
        ..EmbeddingConfig::default()
    };
    let aug: Vec<String> = graph
        .texts()
        .iter()
        .map(|t| mock_augment(AugmentationKind::Shorten, t))
        .collect();
    let h = encode_corpus(graph.texts(), &cfg);
    let h_aug = encode_corpus(&aug, &cfg);
    Fixture { graph, h, h_aug }
}

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = Rng::seed_from(seed);
    DenseMatrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).expect("shape")
}
