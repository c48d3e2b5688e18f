use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vitalfuse::features::{
    classify_feature_vector, fit_map, map_heart_to_resp, skew_threshold, update_state, Channel,
    FeatureClass, FeatureState, LinearMap,
};

type Pairs = Vec<(Vec<f64>, Vec<f64>)>;

fn random_pairs(rng: &mut ChaCha8Rng, n: usize, dh: usize, dr: usize) -> Pairs {
    (0..n)
        .map(|_| {
            let h: Vec<f64> = (0..dh).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let r: Vec<f64> = (0..dr).map(|_| rng.gen_range(-5.0..5.0)).collect();
            (h, r)
        })
        .collect()
}

/// Least squares with an explicit intercept column, solved from the
/// uncentered normal equations by Cholesky. Returns rows `[T_k.., b_k]`.
fn oracle_fit(pairs: &Pairs) -> Vec<Vec<f64>> {
    let dh = pairs[0].0.len();
    let dr = pairs[0].1.len();
    let p = dh + 1;
    let x = |h: &[f64], i: usize| if i < dh { h[i] } else { 1.0 };
    let mut g = vec![vec![0.0; p]; p];
    let mut rhs = vec![vec![0.0; p]; dr];
    for (h, r) in pairs {
        for i in 0..p {
            for j in 0..p {
                g[i][j] += x(h, i) * x(h, j);
            }
            for k in 0..dr {
                rhs[k][i] += x(h, i) * r[k];
            }
        }
    }
    let mut l = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][i] = (g[i][i] - s).sqrt();
            } else {
                l[i][j] = (g[i][j] - s) / l[j][j];
            }
        }
    }
    rhs.iter()
        .map(|b| {
            let mut y = vec![0.0; p];
            for i in 0..p {
                y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
            }
            let mut w = vec![0.0; p];
            for i in (0..p).rev() {
                w[i] = (y[i] - (i + 1..p).map(|k| l[k][i] * w[k]).sum::<f64>()) / l[i][i];
            }
            w
        })
        .collect()
}

fn residual(map: &LinearMap, pairs: &Pairs) -> f64 {
    pairs
        .iter()
        .map(|(h, r)| {
            let fr = map.apply(h).unwrap();
            fr.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        })
        .sum()
}

#[test]
fn agrees_with_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..200 {
        let dh = 1 + trial % 3;
        let dr = 1 + (trial / 3) % 3;
        let pairs = random_pairs(&mut rng, 3 * dh + 5, dh, dr);
        let map = fit_map(&pairs).unwrap();
        let oracle = oracle_fit(&pairs);
        for k in 0..dr {
            let mut intercept = map.mean_resp[k];
            for i in 0..dh {
                assert!((map.t.get(k, i) - oracle[k][i]).abs() < 1e-9, "trial {trial}");
                intercept -= map.t.get(k, i) * map.mean_heart[i];
            }
            assert!((intercept - oracle[k][dh]).abs() < 1e-9, "trial {trial}");
        }
    }
}

#[test]
fn doubled_heart_gives_factor_two() {
    let pairs: Pairs = (0..20)
        .map(|i| {
            let h = vec![i as f64, ((i * 7) % 5) as f64];
            let r = h.iter().map(|v| 2.0 * v).collect();
            (h, r)
        })
        .collect();
    let map = fit_map(&pairs).unwrap();
    for r in 0..2 {
        for c in 0..2 {
            let want = if r == c { 2.0 } else { 0.0 };
            assert!((map.t.get(r, c) - want).abs() < 1e-9);
        }
    }
}

#[test]
fn constant_heart_predicts_the_mean() {
    let pairs: Pairs = (0..10).map(|i| (vec![3.0, 3.0], vec![i as f64])).collect();
    let map = fit_map(&pairs).unwrap();
    let fr = map_heart_to_resp(&map, &[3.0, 3.0]).unwrap();
    assert!((fr[0] - 4.5).abs() < 1e-12);
    assert!(map.t.data.iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn text_form_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let map = fit_map(&random_pairs(&mut rng, 12, 2, 3)).unwrap();
    assert_eq!(LinearMap::from_text(&map.to_text()).unwrap(), map);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fit_is_locally_optimal(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs = random_pairs(&mut rng, 15, 2, 2);
        let map = fit_map(&pairs).unwrap();
        let best = residual(&map, &pairs);
        for _ in 0..10 {
            let mut delta: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
            delta.iter_mut().for_each(|d| *d *= 1e-3 / norm);
            let mut moved = map.clone();
            for (t, d) in moved.t.data.iter_mut().zip(&delta) {
                *t += d;
            }
            prop_assert!(residual(&moved, &pairs) >= best - 1e-9);
        }
    }

    #[test]
    fn map_is_affine(seed in any::<u64>(), a in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = fit_map(&random_pairs(&mut rng, 10, 2, 2)).unwrap();
        let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let y: Vec<f64> = (0..2).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + (1.0 - a) * q).collect();
        let fx = map.apply(&x).unwrap();
        let fy = map.apply(&y).unwrap();
        let fm = map.apply(&mix).unwrap();
        for k in 0..2 {
            let want = a * fx[k] + (1.0 - a) * fy[k];
            prop_assert!((fm[k] - want).abs() < 1e-9 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn stale_channel_resets_to_its_baseline(
        obs in prop::array::uniform2(-50.0f64..50.0),
        gap_s in 301i64..5000,
    ) {
        let state = FeatureState::new(vec![1.0, 2.0], vec![3.0, 4.0], 300.0).unwrap();
        let state = update_state(&state, Channel::Heart, &obs, 1_000).unwrap();
        let state = update_state(&state, Channel::Respiration, &obs, 1_000).unwrap();
        let later = 1_000 + gap_s * 1000;
        let next = update_state(&state, Channel::Respiration, &[9.0, 9.0], later).unwrap();
        prop_assert_eq!(&next.heart_recent, &vec![3.0, 4.0]);
        prop_assert_eq!(&next.resp_recent, &vec![9.0, 9.0]);
    }

    #[test]
    fn tau_equals_mean_only_for_constant_history(
        h in prop::collection::vec(-100.0f64..100.0, 2..50),
    ) {
        let t = skew_threshold(&h).unwrap();
        let constant = h.iter().all(|v| *v == h[0]);
        prop_assert!(t.tau >= t.mu_t);
        prop_assert_eq!(t.tau == t.mu_t, constant);
    }
}

#[test]
fn skew_boundary_is_exclusive() {
    let pairs: Pairs = (0..5).map(|i| (vec![i as f64], vec![0.0])).collect();
    let map = fit_map(&pairs).unwrap();
    assert_eq!(classify_feature_vector(&map, &[1.5], 1.5), FeatureClass::Within);
    assert_eq!(classify_feature_vector(&map, &[1.5 + 1e-9], 1.5), FeatureClass::Skewed);
}

#[test]
fn constant_history_has_zero_spread() {
    for v in [0.1, 1.0 / 3.0, 72.4, -5e-7] {
        for n in 2..40 {
            let t = skew_threshold(&vec![v; n]).unwrap();
            assert_eq!(t.sigma_t, 0.0, "{v} x {n}");
            assert_eq!(t.tau, t.mu_t);
        }
    }
}
