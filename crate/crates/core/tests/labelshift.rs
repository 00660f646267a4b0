use netchoice_core::labelshift::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Labels drawn from `prior`, predictions correct with probability `acc`
/// and otherwise uniform over the other classes.
fn simulate(rng: &mut ChaCha8Rng, prior: &[f64], acc: f64, n: usize) -> (Vec<usize>, Vec<usize>) {
    let k = prior.len();
    let mut labels = Vec::with_capacity(n);
    let mut preds = Vec::with_capacity(n);
    for _ in 0..n {
        let mut u = rng.random::<f64>();
        let mut y = k - 1;
        for (j, p) in prior.iter().enumerate() {
            if u < *p {
                y = j;
                break;
            }
            u -= p;
        }
        let pred = if rng.random::<f64>() < acc {
            y
        } else {
            (y + rng.random_range(1..k)) % k
        };
        labels.push(y);
        preds.push(pred);
    }
    (preds, labels)
}

#[test]
fn synthetic_shift_recovers_target_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (src_pred, src_label) = simulate(&mut rng, &[0.5, 0.5], 0.9, 10_000);
    let (tgt_pred, _) = simulate(&mut rng, &[0.2, 0.8], 0.9, 10_000);
    let c = confusion_from_holdout(&src_pred, &src_label, 2).unwrap();
    let mu = predicted_marginal(&tgt_pred, 2).unwrap();
    let est = estimate_shift(&c, &mu).unwrap();
    assert!((est.priors[0] - 0.2).abs() < 0.03, "{:?}", est.priors);
    assert!((est.priors[1] - 0.8).abs() < 0.03);
    // naive plug-in is visibly biased toward 0.5
    assert!((mu[0] - 0.2).abs() > (est.priors[0] - 0.2).abs());
}

#[test]
fn confusion_matches_tally_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (preds, labels) = simulate(&mut rng, &[0.3, 0.5, 0.2], 0.7, 997);
    let c = confusion_from_holdout(&preds, &labels, 3).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let n = preds.iter().zip(&labels).filter(|&(&p, &l)| p == i && l == j).count();
            assert_eq!(c.c[i][j], n as f64 / 997.0);
        }
    }
    let total: f64 = c.c.iter().flatten().sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(confusion_from_holdout(&[0, 1], &[0], 2).is_err());
    assert!(confusion_from_holdout(&[0, 3], &[0, 1], 2).is_err());
}

#[test]
fn hand_solved_two_by_two() {
    let c = ConfusionJoint {
        c: vec![vec![0.4, 0.1], vec![0.1, 0.4]],
        n_holdout: 10,
    };
    let est = estimate_shift(&c, &[0.35, 0.65]).unwrap();
    assert!((est.weights[0] - 0.5).abs() < 1e-12 && (est.weights[1] - 1.5).abs() < 1e-12);
    assert!((est.priors[0] - 0.25).abs() < 1e-12 && (est.priors[1] - 0.75).abs() < 1e-12);
    let singular = ConfusionJoint {
        c: vec![vec![0.25, 0.25], vec![0.25, 0.25]],
        n_holdout: 4,
    };
    assert!(matches!(bbse_weights(&singular, &[0.5, 0.5]), Err(netchoice_core::Error::IllConditioned(_))));
}

fn joint_strategy(k: usize) -> impl Strategy<Value = ConfusionJoint> {
    proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, k), k).prop_map(move |raw| {
        // diagonally dominant keeps the gate open
        let mut c: Vec<Vec<f64>> = raw;
        for (i, row) in c.iter_mut().enumerate() {
            row[i] += k as f64;
        }
        let total: f64 = c.iter().flatten().sum();
        ConfusionJoint {
            c: c.into_iter().map(|r| r.into_iter().map(|v| v / total).collect()).collect(),
            n_holdout: 1000,
        }
    })
}

proptest! {
    #[test]
    fn no_shift_gives_unit_weights(c in (2usize..5).prop_flat_map(joint_strategy)) {
        let w = bbse_weights(&c, &c.row_sums()).unwrap();
        for v in w {
            prop_assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn perfect_classifier_returns_marginal(p in proptest::collection::vec(0.05f64..1.0, 2..6),
                                           m in proptest::collection::vec(0.0f64..1.0, 6)) {
        let k = p.len();
        let ps: f64 = p.iter().sum();
        let c = ConfusionJoint {
            c: (0..k).map(|i| (0..k).map(|j| if i == j { p[i] / ps } else { 0.0 }).collect()).collect(),
            n_holdout: 100,
        };
        let mut mu: Vec<f64> = m[..k].iter().map(|v| v + 0.01).collect();
        let ms: f64 = mu.iter().sum();
        mu.iter_mut().for_each(|v| *v /= ms);
        let est = estimate_shift(&c, &mu).unwrap();
        for (q, u) in est.priors.iter().zip(&mu) {
            prop_assert!((q - u).abs() < 1e-12);
        }
    }

    #[test]
    fn priors_are_a_distribution(c in (2usize..5).prop_flat_map(joint_strategy),
                                 m in proptest::collection::vec(0.0f64..1.0, 5)) {
        let k = c.k();
        let mut mu: Vec<f64> = m[..k].to_vec();
        let s: f64 = mu.iter().sum::<f64>().max(1e-9);
        mu.iter_mut().for_each(|v| *v /= s);
        if let Ok(est) = estimate_shift(&c, &mu) {
            prop_assert!(est.priors.iter().all(|&q| q >= 0.0));
            prop_assert!((est.priors.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
