//! Feature-size selection against independent references: quadrature for
//! the Marcum Q-function, the closed-form Gaussian KL divergence and the
//! published worked example.

use mdfeat_core::select::{self, SelectionConfig, SelectionStats};
use mdfeat_oracles::{gaussian_kl, marcum_q_quadrature};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn marcum_matches_quadrature() {
    for m in [1u32, 2, 4] {
        for i in 0..8 {
            for j in 0..8 {
                let (a, b) = (i as f64 * 5.3, j as f64 * 5.3 + 0.2);
                let q = select::marcum_q(m as f64, a, b).unwrap();
                let o = marcum_q_quadrature(m, a, b);
                assert!((q - o).abs() < 1e-6, "m={m} a={a} b={b}: {q} vs {o}");
            }
        }
    }
    let q = select::marcum_q(1.0, 2.785, 2.261).unwrap();
    assert!((q - marcum_q_quadrature(1, 2.785, 2.261)).abs() < 1e-8);
}

#[test]
fn knn_kl_recovers_gaussian_divergence() {
    let truth = gaussian_kl(0.0, 1.0, 1.0, 1.0);
    let mut est = 0.0;
    let seeds = 4;
    for seed in 0..seeds {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |mu: f64| -> Vec<Vec<f64>> {
            (0..2000)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    vec![mu + z]
                })
                .collect::<Vec<_>>()
        };
        let p = draw(0.0);
        let q = draw(1.0);
        est += select::knn_kl(&p, &q, 30, 1.0).unwrap();
        let back = select::knn_kl(&q, &p, 30, 1.0).unwrap();
        assert!(back.is_finite());
    }
    est /= seeds as f64;
    assert!((est - truth).abs() < 0.15, "{est}");
}

#[test]
fn knn_kl_is_asymmetric() {
    let p: Vec<Vec<f64>> = (0..300).map(|i| vec![(i as f64 * 0.618).fract()]).collect();
    let q: Vec<Vec<f64>> = (0..300).map(|i| vec![3.0 * (i as f64 * 0.414).fract()]).collect();
    let pq = select::knn_kl(&p, &q, 5, 1.0).unwrap();
    let qp = select::knn_kl(&q, &p, 5, 1.0).unwrap();
    assert!((pq - qp).abs() > 1e-3);
}

#[test]
fn worked_example_end_to_end() {
    let e = [53.9, 26.8, 17.4, 12.5, 9.46, 5.35, 4.72, 3.36, 2.96, 2.55];
    let stats = SelectionStats::new(e.iter().map(|x| x * 1e-7).collect(), 2.0).unwrap();
    let cfg = SelectionConfig { f_min: 3, f_max: 8, weight: 0.5, neighbors: 1 };
    let b = [0.921, 0.990, 1.0, 0.979, 0.952, 0.926];
    let rep = select::evaluate_range(&stats, &cfg, Some(&b)).unwrap();
    let psi: [f64; 6] = [5.84, 4.73, 3.79, 3.40, 2.96, 2.76];
    let p_th: [f64; 6] = [14.93, 10.98, 7.41, 5.04, 4.04, 3.16];
    let lambda: [&[f64]; 6] = [
        &[11.5],
        &[12.6, 7.8],
        &[13.6, 8.7, 5.7],
        &[14.0, 9.1, 6.1, 2.0],
        &[14.4, 9.5, 6.5, 2.4, 1.8],
        &[14.6, 9.7, 6.7, 2.6, 2.0, 0.6],
    ];
    let p: [&[f64]; 6] = [
        &[0.77],
        &[0.96, 0.66],
        &[1.00, 0.93, 0.65],
        &[1.00, 0.99, 0.85, 0.33],
        &[1.00, 1.00, 0.95, 0.46, 0.37],
        &[1.00, 1.00, 0.98, 0.58, 0.48, 0.34],
    ];
    let pf: [&[f64]; 6] = [
        &[0.77],
        &[0.36, 0.63],
        &[0.02, 0.37, 0.61],
        &[0.00, 0.10, 0.61, 0.28],
        &[0.00, 0.02, 0.35, 0.47, 0.16],
        &[0.00, 0.00, 0.15, 0.41, 0.35, 0.09],
    ];
    for (i, r) in rep.rows.iter().enumerate() {
        assert!((r.psi2 * 1e7 - psi[i]).abs() <= 0.02, "psi F={}", r.f);
        assert!((r.p_th * 1e7 - p_th[i]).abs() <= 0.03, "P_th F={}", r.f);
        for (k, &l) in lambda[i].iter().enumerate() {
            assert!((r.lambda[k + 2] * 1e7 - l).abs() <= 0.1, "lambda F={} n={}", r.f, k + 2);
        }
        for (k, &x) in p[i].iter().enumerate() {
            assert!((r.detection[k + 2] - x).abs() <= 0.02, "p F={} n={}", r.f, k + 2);
        }
        for (k, &x) in pf[i].iter().enumerate() {
            assert!((r.acquisition[k + 3] - x).abs() <= 0.02, "P_f F={} f={}", r.f, k + 3);
        }
    }
    assert_eq!(rep.f_star, Some(5));
}
