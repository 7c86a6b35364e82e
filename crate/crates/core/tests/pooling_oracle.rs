mod common;

use common::{oracle_pool, random_matrix, rows_of};
use embagg::encoder::{EmbeddingStore, Precision, StoreWriter};
use embagg::pooling::{aggregate, aggregate_batch, output_dim, AggregationStrategy, AggregationStrategy::*};
use embagg::{Error, TokenEmbeddingMatrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn assert_close(got: &[f32], want: &[f64], tol: f64, what: &str) {
    assert_eq!(got.len(), want.len(), "{what}: length");
    for (i, (&g, &w)) in got.iter().zip(want).enumerate() {
        assert!((g as f64 - w).abs() <= tol, "{what}[{i}]: {g} vs {w}");
    }
}

#[test]
fn every_strategy_matches_oracle_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..300 {
        let t = [2, 3, 5, 60][case % 4];
        let h = [1, 8, 3][case % 3];
        let mut m = random_matrix(&mut rng, "d", t, h);
        if case % 2 == 1 {
            m = m.to_f16().0;
        }
        let rows = rows_of(&m);
        for s in AggregationStrategy::ALL {
            let want = oracle_pool(&rows, s).unwrap();
            let got = aggregate(&m, s).unwrap();
            assert_eq!(got.dim(), output_dim(s, h));
            assert_close(&got.data, &want, 1e-6, &format!("{s} T={t} H={h}"));
        }
    }
}

#[test]
fn single_row_matrices() {
    let m = TokenEmbeddingMatrix::from_rows("d", &[vec![0.5, -2.0]]).unwrap();
    for s in AggregationStrategy::ALL {
        match oracle_pool(&rows_of(&m), s) {
            Some(want) => assert_close(&aggregate(&m, s).unwrap().data, &want, 0.0, s.name()),
            None => assert!(matches!(
                aggregate(&m, s),
                Err(Error::InsufficientTokens { required: 2, actual: 1, .. })
            )),
        }
    }
}

#[test]
fn batch_matches_single_calls_in_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.embs");
    let matrices: Vec<_> = (0..200)
        .map(|i| random_matrix(&mut rng, &format!("doc{i}"), 6, 4))
        .collect();
    StoreWriter::write_all(&path, Precision::F16, "t", &matrices).unwrap();
    let store = EmbeddingStore::open(&path).unwrap();

    let ids: Vec<String> = (0..200).rev().map(|i| format!("doc{i}")).collect();
    for s in [FirstMeanStd, Quantiles255075, SumAll] {
        let batch = aggregate_batch(&store, &ids, s).unwrap();
        assert_eq!(batch.len(), ids.len());
        for (emb, id) in batch.iter().zip(&ids) {
            assert_eq!(&emb.doc_id, id);
            assert_eq!(emb, &aggregate(&store.get(id).unwrap(), s).unwrap());
        }
    }
    let none: Vec<String> = Vec::new();
    assert!(aggregate_batch(&store, &none, First).unwrap().is_empty());
    assert!(matches!(
        aggregate_batch(&store, &["doc1", "nope"], First),
        Err(Error::UnknownDocument(id)) if id == "nope"
    ));
}

fn matrix_strategy() -> impl Strategy<Value = (usize, usize, Vec<f32>)> {
    (2usize..12, 1usize..6).prop_flat_map(|(t, h)| {
        (Just(t), Just(h), prop::collection::vec(-100.0f32..100.0, t * h))
    })
}

proptest! {
    #[test]
    fn sum_all_is_linear((t, h, data) in matrix_strategy(), alpha in -4.0f32..4.0) {
        let m = TokenEmbeddingMatrix::from_f32("d", t, h, data.clone()).unwrap();
        let scaled = TokenEmbeddingMatrix::from_f32("d", t, h, data.iter().map(|x| alpha * x).collect()).unwrap();
        let base = aggregate(&m, SumAll).unwrap().data;
        let got = aggregate(&scaled, SumAll).unwrap().data;
        let scale = data.iter().map(|x| x.abs()).sum::<f32>().max(1.0) as f64;
        for (g, b) in got.iter().zip(&base) {
            prop_assert!((*g as f64 - alpha as f64 * *b as f64).abs() <= 1e-6 * scale * alpha.abs().max(1.0) as f64);
        }
    }

    #[test]
    fn rest_statistics_ignore_row_order((t, h, data) in matrix_strategy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let m = TokenEmbeddingMatrix::from_f32("d", t, h, data.clone()).unwrap();
        let mut rows: Vec<Vec<f32>> = data.chunks(h).map(<[f32]>::to_vec).collect();
        rows[1..].shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let permuted = TokenEmbeddingMatrix::from_rows("d", &rows).unwrap();
        for s in [MeanExceptFirst, FirstMeanStd, MeanMinMax, Quantiles255075] {
            let a = aggregate(&m, s).unwrap().data;
            let b = aggregate(&permuted, s).unwrap().data;
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-4 * x.abs().max(1.0), "{s}: {x} vs {y}");
            }
        }
        prop_assert_eq!(aggregate(&permuted, Second).unwrap().data, rows[1].clone());
        prop_assert_eq!(aggregate(&permuted, Last).unwrap().data, rows[t - 1].clone());
    }

    #[test]
    fn median_block_is_columnwise_median((t, h, data) in matrix_strategy()) {
        let m = TokenEmbeddingMatrix::from_f32("d", t, h, data.clone()).unwrap();
        let q = aggregate(&m, Quantiles255075).unwrap().data;
        for j in 0..h {
            let mut col: Vec<f32> = (1..t).map(|i| data[i * h + j]).collect();
            col.sort_by(f32::total_cmp);
            let n = col.len();
            let median = if n % 2 == 1 {
                col[n / 2] as f64
            } else {
                (col[n / 2 - 1] as f64 + col[n / 2] as f64) / 2.0
            };
            prop_assert!((q[h + j] as f64 - median).abs() <= 1e-5 * median.abs().max(1.0));
        }
    }

    #[test]
    fn outputs_are_finite((t, h, data) in matrix_strategy()) {
        let m = TokenEmbeddingMatrix::from_f32("d", t, h, data).unwrap();
        for s in AggregationStrategy::ALL {
            let e = aggregate(&m, s).unwrap();
            prop_assert_eq!(e.dim(), s.multiplicity() * h);
            prop_assert!(e.data.iter().all(|x| x.is_finite()));
        }
    }
}
