use proptest::prelude::*;
use textgcl::contrastive::{info_nce_value, LossConfig};
use textgcl::encoder::{gcn_forward, init_params, normalize_adjacency, AdaptorConfig, EncoderDims, EncoderKind};
use textgcl::eval::{classification_metrics, train_linear_probe, ProbeHyper};
use textgcl::numerics::{CsrMatrix, DenseMatrix, Rng};

fn vector(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, d).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>, f64)> {
    (2usize..6, 1usize..6).prop_flat_map(|(d, m)| {
        (
            vector(d),
            vector(d),
            prop::collection::vec(vector(d), m),
            prop::collection::vec(vector(d), m),
            prop::sample::select(vec![0.05, 0.2, 0.5, 1.0]),
        )
    })
}

fn loss_cfg(tau: f64) -> LossConfig {
    LossConfig {
        temperature: tau,
        ..LossConfig::default()
    }
}

proptest! {
    #[test]
    fn info_nce_is_positive((a, p, no, na, tau) in instance()) {
        let l = info_nce_value(&a, &p, &no, &na, &loss_cfg(tau)).unwrap();
        prop_assert!(l > 0.0 && l.is_finite());
    }

    #[test]
    fn info_nce_ignores_vector_scale((a, p, no, na, tau) in instance(), s in 0.01f64..100.0) {
        let cfg = loss_cfg(tau);
        let scaled = |vs: &[Vec<f64>]| vs.iter().map(|v| v.iter().map(|x| x * s).collect()).collect::<Vec<Vec<f64>>>();
        let base = info_nce_value(&a, &p, &no, &na, &cfg).unwrap();
        let moved = info_nce_value(
            &a.iter().map(|x| x * s).collect::<Vec<_>>(),
            &p.iter().map(|x| x * 2.0 * s).collect::<Vec<_>>(),
            &scaled(&no),
            &scaled(&na),
            &cfg,
        )
        .unwrap();
        prop_assert!((base - moved).abs() <= 1e-10 * base.max(1.0));
    }

    /// Pulling the positive towards the anchor never raises the loss.
    #[test]
    fn info_nce_falls_as_positive_aligns((a, p, no, na, tau) in instance(), t in 0.0f64..1.0) {
        let cfg = loss_cfg(tau);
        let closer: Vec<f64> = p.iter().zip(&a).map(|(x, y)| (1.0 - t) * x + t * y).collect();
        prop_assume!(closer.iter().any(|x| x.abs() > 1e-6));
        let before = info_nce_value(&a, &p, &no, &na, &cfg).unwrap();
        let after = info_nce_value(&a, &closer, &no, &na, &cfg).unwrap();
        prop_assert!(after <= before + 1e-12);
    }

    #[test]
    fn metrics_lie_in_unit_interval(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60)
    ) {
        let (truth, pred): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let m = classification_metrics(&truth, &pred, 4).unwrap();
        for v in m.values() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn gcn_is_permutation_equivariant(seed in any::<u64>(), n in 2usize..16) {
        let mut rng = Rng::seed_from(seed);
        let mut t = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.bernoulli(0.3) {
                    t.push((i, j, 1.0));
                    t.push((j, i, 1.0));
                }
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.below(i + 1));
        }
        let a = CsrMatrix::from_triplets(n, n, &t).unwrap();
        let pt: Vec<_> = t.iter().map(|&(i, j, v)| (perm[i], perm[j], v)).collect();
        let pa = CsrMatrix::from_triplets(n, n, &pt).unwrap();

        let x = DenseMatrix::from_vec(n, 3, (0..n * 3).map(|_| rng.normal()).collect()).unwrap();
        let mut px = DenseMatrix::zeros(n, 3);
        for i in 0..n {
            px.row_mut(perm[i]).copy_from_slice(x.row(i));
        }
        let dims = EncoderDims { hidden: vec![4], output: 2 };
        let stack = init_params(&mut rng, 3, &dims, EncoderKind::Gcn, &AdaptorConfig::default()).unwrap();
        let z = gcn_forward(&normalize_adjacency(&a).unwrap(), &x, &stack).unwrap();
        let pz = gcn_forward(&normalize_adjacency(&pa).unwrap(), &px, &stack).unwrap();
        for i in 0..n {
            for (u, v) in z.row(i).iter().zip(pz.row(perm[i])) {
                prop_assert!((u - v).abs() <= 1e-12);
            }
        }
    }

    /// With standardization on, translating every embedding by one vector
    /// leaves the fitted decision function unchanged.
    #[test]
    fn probe_is_translation_invariant(seed in any::<u64>(), shift in prop::collection::vec(-5.0f64..5.0, 3)) {
        let mut rng = Rng::seed_from(seed);
        let n = 24;
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let x = DenseMatrix::from_vec(n, 3, (0..n * 3).map(|k| rng.normal() + (labels[k / 3] == k % 3) as u8 as f64)
            .collect()).unwrap();
        let mut moved = x.clone();
        for i in 0..n {
            for (v, s) in moved.row_mut(i).iter_mut().zip(&shift) {
                *v += s;
            }
        }
        let ids: Vec<usize> = (0..16).collect();
        let hyper = ProbeHyper { epochs: 50, ..ProbeHyper::default() };
        let a = train_linear_probe(&x, &labels, &ids, 3, &hyper).unwrap();
        let b = train_linear_probe(&moved, &labels, &ids, 3, &hyper).unwrap();
        let test: Vec<usize> = (16..n).collect();
        let la = a.logits(&x, &test).unwrap();
        let lb = b.logits(&moved, &test).unwrap();
        for (u, v) in la.as_slice().iter().zip(lb.as_slice()) {
            prop_assert!((u - v).abs() <= 1e-8);
        }
    }
}
