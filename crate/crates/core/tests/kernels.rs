mod common;

use common::{random_batch, symmetric_eigenvalues};
use proptest::prelude::*;
use score_core::kernels::{euclidean_distance, kernel_gradient, similarity};
use score_core::rng::GaussianSampler;
use score_core::KernelSpec;

const KINDS: [KernelSpec; 3] = [KernelSpec::Cosine, KernelSpec::Rbf { bandwidth: 0.8 }, KernelSpec::NegEuclidean];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernels_are_symmetric(seed in any::<u64>(), n in 1usize..12, d in 1usize..6) {
        let b = random_batch(n, d, 1, seed);
        for kind in KINDS {
            let s = similarity(&b, kind).unwrap().entries;
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((s[[i, j]] - s[[j, i]]).abs() <= 1e-12);
                }
            }
        }
        let dist = euclidean_distance(&b).entries;
        for i in 0..n {
            prop_assert_eq!(dist[[i, i]], 0.0);
            for j in 0..n {
                prop_assert!((dist[[i, j]] - dist[[j, i]]).abs() <= 1e-12);
                prop_assert!(dist[[i, j]] >= 0.0);
            }
        }
    }

    #[test]
    fn cosine_ignores_positive_rescaling(seed in any::<u64>(), row in 0usize..8, scale in 1e-3f64..1e3) {
        let b = random_batch(8, 5, 1, seed);
        let mut z = b.vectors().clone();
        z.row_mut(row).mapv_inplace(|v| v * scale);
        let scaled = b.with_vectors(z).unwrap();
        let s = similarity(&b, KernelSpec::Cosine).unwrap().entries;
        let t = similarity(&scaled, KernelSpec::Cosine).unwrap().entries;
        for (x, y) in s.iter().zip(t.iter()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn rbf_is_positive_semidefinite(seed in any::<u64>(), n in 2usize..=16, bw in 0.1f64..3.0) {
        let b = random_batch(n, 3, 1, seed);
        let s = similarity(&b, KernelSpec::Rbf { bandwidth: bw }).unwrap().entries;
        let min = symmetric_eigenvalues(&s).into_iter().fold(f64::INFINITY, f64::min);
        prop_assert!(min >= -1e-9, "smallest eigenvalue {}", min);
    }
}

#[test]
fn kernel_gradient_matches_finite_differences() {
    let h = 1e-6;
    let mut g = GaussianSampler::new(31);
    for draw in 0..100u64 {
        let b = random_batch(6, 4, 1, 500 + draw);
        let i = (g.uniform() * 6.0) as usize;
        let j = (g.uniform() * 6.0) as usize;
        let kind = KINDS[draw as usize % 3];
        let (gi, gj) = kernel_gradient(&b, kind, i, j).unwrap();
        for (who, analytic) in [(i, &gi), (j, &gj)] {
            if i == j {
                assert!(analytic.iter().all(|&v| v == 0.0));
                continue;
            }
            for c in 0..4 {
                let eval = |delta: f64| {
                    let mut z = b.vectors().clone();
                    z[[who, c]] += delta;
                    similarity(&b.with_vectors(z).unwrap(), kind).unwrap().entries[[i, j]]
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic[c];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-7);
                assert!(rel <= 1e-5, "draw {draw} {kind} ({i},{j}) coord {c}: {a} vs {fd}");
            }
        }
    }
}
