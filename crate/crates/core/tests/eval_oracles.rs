use std::collections::HashSet;

use deepview_core::eval::{compare_models, confusion_matrix, neighborhood_curves, q_knn_error};
use deepview_core::rng::SeededRng;
use ndarray::Array2;
use proptest::prelude::*;

fn random(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = SeededRng::new(seed);
    Array2::from_shape_fn((n, d), |_| rng.normal())
}

/// k nearest other rows by full sort, ties to the lower index.
fn knn_sets(x: &Array2<f64>, k: usize) -> Vec<Vec<usize>> {
    let n = x.nrows();
    (0..n)
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    (
                        x.row(i)
                            .iter()
                            .zip(x.row(j).iter())
                            .map(|(a, b)| (a - b).powi(2))
                            .sum::<f64>(),
                        j,
                    )
                })
                .collect();
            d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            d[..k].iter().map(|p| p.1).collect()
        })
        .collect()
}

fn q_nn_oracle(a: &Array2<f64>, b: &Array2<f64>, k: usize) -> f64 {
    let sa = knn_sets(a, k);
    let sb = knn_sets(b, k);
    let n = a.nrows();
    let shared: usize = (0..n)
        .map(|i| {
            let set: HashSet<usize> = sa[i].iter().copied().collect();
            sb[i].iter().filter(|j| set.contains(j)).count()
        })
        .sum();
    shared as f64 / (n * k) as f64
}

#[test]
fn curves_match_set_intersection_oracle() {
    let a = random(50, 5, 1);
    let b = random(50, 2, 2);
    let c = neighborhood_curves(a.view(), b.view()).unwrap();
    assert_eq!(c.ks.len(), 49);
    for k in 1..=49 {
        let want = q_nn_oracle(&a, &b, k);
        assert!((c.q_nn[k - 1] - want).abs() < 1e-12, "k={k}");
        assert!((c.lcmc[k - 1] - (c.q_nn[k - 1] - k as f64 / 49.0)).abs() < 1e-12);
    }
    let best = c.lcmc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let first_best = c.lcmc.iter().position(|&v| v == best).unwrap() + 1;
    assert_eq!(c.k_max, first_best);
    let q_local: f64 = c.q_nn[..c.k_max].iter().sum::<f64>() / c.k_max as f64;
    assert!((c.q_local - q_local).abs() < 1e-12);
    assert!((c.q_nn[48] - 1.0).abs() < 1e-12);
}

#[test]
fn identical_representations_score_one() {
    let a = random(30, 4, 3);
    let c = neighborhood_curves(a.view(), a.view()).unwrap();
    assert!(c.q_nn.iter().all(|&q| (q - 1.0).abs() < 1e-12));
    assert!((c.auc - 1.0).abs() < 1e-12);
    assert!((c.q_local - 1.0).abs() < 1e-12);
    assert_eq!(c.k_max, 1);
}

#[test]
fn separated_clusters_have_zero_knn_error() {
    let mut rng = SeededRng::new(14);
    let x = Array2::from_shape_fn(
        (40, 2),
        |(i, a)| if a == 0 && i >= 20 { 100.0 } else { 0.0 } + rng.uniform(-0.5, 0.5),
    );
    let labels: Vec<usize> = (0..40).map(|i| i / 20).collect();
    assert_eq!(q_knn_error(x.view(), &labels, 5).unwrap(), 0.0);
    assert_eq!(q_knn_error(x.view(), &[1; 40], 5).unwrap(), 0.0);
    assert!(q_knn_error(x.view(), &labels, 40).is_err());
}

#[test]
fn rotation_and_scaling_do_not_change_curves() {
    let a = random(40, 2, 4);
    let (s, co) = (0.7f64.sin(), 0.7f64.cos());
    let rotated = Array2::from_shape_fn((40, 2), |(i, j)| {
        let (x, y) = (a[[i, 0]], a[[i, 1]]);
        3.0 * if j == 0 { co * x - s * y } else { s * x + co * y }
    });
    let b = random(40, 6, 5);
    let c1 = neighborhood_curves(a.view(), b.view()).unwrap();
    let c2 = neighborhood_curves(rotated.view(), b.view()).unwrap();
    for (x, y) in c1.q_nn.iter().zip(&c2.q_nn) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn csv_layout() {
    let a = random(5, 2, 6);
    let c = neighborhood_curves(a.view(), a.view()).unwrap();
    let mut out = Vec::new();
    c.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,q_nn,lcmc");
    assert_eq!(lines.len(), 5);
}

#[test]
fn compare_models_pairs_and_alignment() {
    let a = random(20, 3, 7);
    let b = random(20, 3, 8);
    let c = random(20, 3, 9);
    let cmp = compare_models(&[("a".into(), a.view()), ("b".into(), b.view()), ("c".into(), c.view())]).unwrap();
    let names: Vec<&str> = cmp.summary.iter().map(|r| r.pair.as_str()).collect();
    assert_eq!(names, ["a vs b", "a vs c", "b vs c"]);
    let short = random(19, 3, 10);
    assert!(compare_models(&[("a".into(), a.view()), ("s".into(), short.view())]).is_err());
}

#[test]
fn q_knn_matches_brute_force() {
    let x = random(30, 2, 11);
    let mut rng = SeededRng::new(12);
    let labels: Vec<usize> = (0..30).map(|_| rng.below(3)).collect();
    let sets = knn_sets(&x, 5);
    let mut wrong = 0;
    for i in 0..30 {
        let mut counts = [0usize; 3];
        for &j in &sets[i] {
            counts[labels[j]] += 1;
        }
        let best = *counts.iter().max().unwrap();
        let nearest = labels[sets[i][0]];
        let vote = if counts[nearest] == best {
            nearest
        } else {
            counts.iter().position(|&c| c == best).unwrap()
        };
        if vote != labels[i] {
            wrong += 1;
        }
    }
    assert!((q_knn_error(x.view(), &labels, 5).unwrap() - wrong as f64 / 30.0).abs() < 1e-15);
    assert!(q_knn_error(x.view(), &labels[..29], 5).is_err());
}

#[test]
fn confusion_matches_hand_loop() {
    let mut rng = SeededRng::new(13);
    let t: Vec<usize> = (0..100).map(|_| rng.below(4)).collect();
    let p: Vec<usize> = (0..100).map(|_| rng.below(4)).collect();
    let names: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
    let cm = confusion_matrix(&t, &p, names).unwrap();
    for a in 0..4 {
        for b in 0..4 {
            let mut n = 0;
            for i in 0..100 {
                if t[i] == a && p[i] == b {
                    n += 1;
                }
            }
            assert_eq!(cm.counts[a][b], n);
        }
    }
    assert_eq!(cm.counts.iter().flatten().sum::<usize>(), 100);
    assert!(confusion_matrix(&[0, 5], &[0, 0], vec!["a".into(), "b".into()]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn curve_identities(seed in 0u64..10_000, n in 4usize..25) {
        let a = random(n, 3, seed);
        let b = random(n, 2, seed.wrapping_add(1));
        let c = neighborhood_curves(a.view(), b.view()).unwrap();
        let back = neighborhood_curves(b.view(), a.view()).unwrap();
        for k in 1..n {
            prop_assert!((0.0..=1.0).contains(&c.q_nn[k - 1]));
            prop_assert!((c.lcmc[k - 1] - (c.q_nn[k - 1] - k as f64 / (n - 1) as f64)).abs() < 1e-12);
            prop_assert!((c.q_nn[k - 1] - back.q_nn[k - 1]).abs() < 1e-12);
        }
        prop_assert!((c.q_nn[n - 2] - 1.0).abs() < 1e-12);
    }
}
