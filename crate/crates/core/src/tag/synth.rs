use serde::{Deserialize, Serialize};

use super::{GraphError, TextAttributedGraph};
use crate::numerics::Rng;

/// Stochastic-block-model graph with class-specific vocabularies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub nodes_per_class: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub vocab_per_class: usize,
    pub tokens_per_node: usize,
    pub noise_token_fraction: f64,
    #[serde(default = "default_noise_vocab")]
    pub noise_vocab: usize,
}

fn default_noise_vocab() -> usize {
    100
}

impl SyntheticSpec {
    /// The 200-node, 4-class fixture used by the test suites.
    pub fn desk_fixture() -> Self {
        Self {
            classes: 4,
            nodes_per_class: 50,
            p_in: 0.1,
            p_out: 0.01,
            vocab_per_class: 30,
            tokens_per_node: 24,
            noise_token_fraction: 0.75,
            noise_vocab: 100,
        }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(GraphError::InvalidSpec(format!("{name} = {p} is outside [0, 1]")))
            }
        };
        prob("p_in", self.p_in)?;
        prob("p_out", self.p_out)?;
        prob("noise_token_fraction", self.noise_token_fraction)?;
        for (name, v) in [
            ("classes", self.classes),
            ("nodes_per_class", self.nodes_per_class),
            ("vocab_per_class", self.vocab_per_class),
            ("tokens_per_node", self.tokens_per_node),
            ("noise_vocab", self.noise_vocab),
        ] {
            if v == 0 {
                return Err(GraphError::InvalidSpec(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

pub fn class_token(class: usize, k: usize) -> String {
    format!("c{class}w{k}")
}

pub fn noise_token(k: usize) -> String {
    format!("n{k}")
}

/// Nodes are laid out class by class; node `i` has label `i / nodes_per_class`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<TextAttributedGraph, GraphError> {
    spec.validate()?;
    let n = spec.classes * spec.nodes_per_class;
    let labels: Vec<usize> = (0..n).map(|i| i / spec.nodes_per_class).collect();
    let mut rng = Rng::seed_from(seed);

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] { spec.p_in } else { spec.p_out };
            if rng.bernoulli(p) {
                edges.push((i, j));
            }
        }
    }

    let texts = labels
        .iter()
        .map(|&c| {
            (0..spec.tokens_per_node)
                .map(|_| {
                    if rng.bernoulli(spec.noise_token_fraction) {
                        noise_token(rng.below(spec.noise_vocab))
                    } else {
                        class_token(c, rng.below(spec.vocab_per_class))
                    }
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();

    TextAttributedGraph::new(texts, edges, Some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SyntheticSpec {
        SyntheticSpec {
            classes: 2,
            nodes_per_class: 3,
            p_in: 1.0,
            p_out: 0.0,
            vocab_per_class: 5,
            tokens_per_node: 4,
            noise_token_fraction: 0.0,
            noise_vocab: 10,
        }
    }

    #[test]
    fn degenerate_probabilities_give_two_cliques() {
        let g = generate_synthetic(&spec(), 1).unwrap();
        assert_eq!(g.edge_count(), 6);
        for &(a, b) in g.edges() {
            assert_eq!(a / 3, b / 3);
        }
    }

    #[test]
    fn zero_noise_uses_class_vocabulary_only() {
        let g = generate_synthetic(&spec(), 2).unwrap();
        for (n, text) in g.texts().iter().enumerate() {
            let class = g.labels().unwrap()[n];
            let vocab: Vec<_> = (0..5).map(|k| class_token(class, k)).collect();
            assert!(text.split_whitespace().all(|t| vocab.iter().any(|v| v == t)));
            assert_eq!(text.split_whitespace().count(), 4);
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = spec();
        s.p_in = 1.5;
        assert!(generate_synthetic(&s, 0).is_err());
        let mut s = spec();
        s.classes = 0;
        assert!(generate_synthetic(&s, 0).is_err());
    }

    #[test]
    fn edge_count_within_three_sigma() {
        let s = SyntheticSpec {
            classes: 4,
            nodes_per_class: 50,
            p_in: 0.1,
            p_out: 0.01,
            vocab_per_class: 10,
            tokens_per_node: 5,
            noise_token_fraction: 0.5,
            noise_vocab: 10,
        };
        // Within: 4·C(50,2) = 4900 pairs at 0.1; across: C(4,2)·50² = 15000 pairs at 0.01.
        let mean = 4900.0 * 0.1 + 15000.0 * 0.01;
        let var: f64 = 4900.0 * 0.1 * 0.9 + 15000.0 * 0.01 * 0.99;
        assert_eq!(mean, 640.0);
        let g = generate_synthetic(&s, 2024).unwrap();
        let dev = (g.edge_count() as f64 - mean).abs();
        assert!(dev <= 3.0 * var.sqrt(), "edges {}", g.edge_count());
    }
}
