mod common;

use common::{pair_count_auc, random_scored};
use embagg::eval::{average_rank, log_loss, roc_auc};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn rank_sum_equals_pair_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..400 {
        let n = rng.gen_range(2..=200);
        let levels = match case % 3 {
            0 => None,
            1 => Some(rng.gen_range(1..=4)),
            _ => Some(rng.gen_range(5..=40)),
        };
        let (scores, labels) = random_scored(&mut rng, n, levels);
        assert_eq!(roc_auc(&scores, &labels).unwrap(), pair_count_auc(&scores, &labels), "case {case}");
    }
}

#[test]
fn all_scores_tied_is_one_half() {
    let labels = [0, 1, 1, 0, 1];
    assert_eq!(roc_auc(&[0.3; 5], &labels).unwrap(), 0.5);
}

fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..120).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::sample::select(vec![-2.0, -0.5, 0.0, 0.25, 1.0, 3.0]), n),
            prop::collection::vec(0u8..=1, n),
        )
    })
    .prop_filter("both classes", |(_, y)| y.contains(&0) && y.contains(&1))
}

proptest! {
    #[test]
    fn invariant_under_increasing_transform((scores, labels) in scored()) {
        let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + 7.0).collect();
        prop_assert_eq!(roc_auc(&scores, &labels).unwrap(), roc_auc(&transformed, &labels).unwrap());
    }

    #[test]
    fn flipping_labels_and_negating_scores_is_symmetric((scores, labels) in scored()) {
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let flipped: Vec<u8> = labels.iter().map(|y| 1 - y).collect();
        prop_assert_eq!(roc_auc(&neg, &flipped).unwrap(), roc_auc(&scores, &labels).unwrap());
    }

    #[test]
    fn auc_in_unit_interval((scores, labels) in scored()) {
        let a = roc_auc(&scores, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert_eq!(a, pair_count_auc(&scores, &labels));
    }

    #[test]
    fn log_loss_nonnegative(
        probs in prop::collection::vec(0.0f64..=1.0, 1..50),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<u8> = probs.iter().map(|_| rng.gen_range(0..=1)).collect();
        let l = log_loss(&probs, &labels).unwrap();
        prop_assert!(l.is_finite() && l >= 0.0);
    }

    #[test]
    fn rank_columns_sum_to_triangular_number(
        k in 1usize..8,
        d in 1usize..6,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..d).map(|_| rng.gen_range(0..4) as f64 / 4.0).collect())
            .collect();
        let labels: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
        let datasets: Vec<String> = (0..d).map(|j| format!("d{j}")).collect();
        let table = average_rank(&labels, &datasets, &scores).unwrap();
        for j in 0..d {
            let total: f64 = table.rows.iter().map(|r| r.ranks[j]).sum();
            prop_assert_eq!(total, (k * (k + 1)) as f64 / 2.0);
        }
        for row in &table.rows {
            prop_assert_eq!(row.avg_rank, row.ranks.iter().sum::<f64>() / d as f64);
        }
        prop_assert!(table.rows.windows(2).all(|w| w[0].avg_rank <= w[1].avg_rank));
    }
}
