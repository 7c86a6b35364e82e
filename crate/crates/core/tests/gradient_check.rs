use embagg::linear_model::{objective, sigmoid, train_head, InputKind, LinearHead, TrainConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;

struct Instance {
    xs: Vec<Vec<f32>>,
    ys: Vec<u8>,
    weights: Vec<f64>,
    bias: f64,
    l2: f64,
}

fn instance(rng: &mut ChaCha8Rng) -> Instance {
    let d = rng.gen_range(1..=10);
    let n = rng.gen_range(1..=50);
    Instance {
        xs: (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-2.0f32..2.0)).collect())
            .collect(),
        ys: (0..n).map(|_| rng.gen_range(0..=1)).collect(),
        weights: (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        bias: rng.gen_range(-1.0..1.0),
        l2: if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..0.5) },
    }
}

/// `‖analytic − numeric‖ / max(‖analytic‖ + ‖numeric‖, 1e-12)` over weights and bias.
fn gradient_error(inst: &Instance) -> f64 {
    let loss = |w: &[f64], b: f64| objective(w, b, &inst.xs, &inst.ys, inst.l2).unwrap().0;
    let (_, gw, gb) = objective(&inst.weights, inst.bias, &inst.xs, &inst.ys, inst.l2).unwrap();
    let mut analytic = gw;
    analytic.push(gb);

    let mut numeric = Vec::with_capacity(analytic.len());
    for i in 0..inst.weights.len() {
        let mut plus = inst.weights.clone();
        let mut minus = inst.weights.clone();
        plus[i] += H;
        minus[i] -= H;
        numeric.push((loss(&plus, inst.bias) - loss(&minus, inst.bias)) / (2.0 * H));
    }
    numeric.push((loss(&inst.weights, inst.bias + H) - loss(&inst.weights, inst.bias - H)) / (2.0 * H));

    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / (norm(&analytic) + norm(&numeric)).max(1e-12)
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..100 {
        let inst = instance(&mut rng);
        let err = gradient_error(&inst);
        assert!(err < 1e-4, "case {case}: relative error {err:e}");
    }
}

#[test]
fn l2_term_leaves_bias_alone() {
    let xs = vec![vec![1.0f32, -1.0]];
    let (_, gw0, gb0) = objective(&[0.5, 0.5], 0.3, &xs, &[1], 0.0).unwrap();
    let (_, gw1, gb1) = objective(&[0.5, 0.5], 0.3, &xs, &[1], 2.0).unwrap();
    assert_eq!(gb0, gb1);
    assert!((gw1[0] - gw0[0] - 1.0).abs() < 1e-12);
}

fn head(weights: Vec<f32>, bias: f32) -> LinearHead {
    LinearHead {
        weights,
        bias,
        trained_on: "t".into(),
        input_kind: InputKind::Tfidf,
    }
}

#[test]
fn dropout_free_training_is_deterministic_and_lowers_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inst = instance(&mut rng);
    let config = TrainConfig {
        base_lr: 0.05,
        batch_size: 4,
        l2: Some(0.0),
        ..TrainConfig::default()
    };
    let a = train_head(&inst.xs, &inst.ys, None, &config, "t", InputKind::Tfidf).unwrap();
    let b = train_head(&inst.xs, &inst.ys, None, &config, "t", InputKind::Tfidf).unwrap();
    let losses = |log: &[embagg::linear_model::EpochLog]| log.iter().map(|e| e.train_loss.to_bits()).collect::<Vec<_>>();
    assert_eq!(losses(&a.log), losses(&b.log));

    let d = inst.weights.len();
    let (init, _, _) = objective(&vec![0.0; d], 0.0, &inst.xs, &inst.ys, 0.0).unwrap();
    let w: Vec<f64> = a.head.weights.iter().map(|&x| x as f64).collect();
    let (after, _, _) = objective(&w, a.head.bias as f64, &inst.xs, &inst.ys, 0.0).unwrap();
    assert!(after < init, "{after} >= {init}");
}

proptest! {
    #[test]
    fn probability_is_strictly_monotone_in_logit(z in -20.0f64..20.0, dz in 1e-3f64..5.0) {
        let h = head(vec![1.0], 0.0);
        let lo = h.predict_proba(&vec![z as f32]).unwrap();
        let hi = h.predict_proba(&vec![(z + dz) as f32]).unwrap();
        prop_assert!(lo < hi);
        prop_assert!(lo > 0.0 && hi < 1.0);
        prop_assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn bias_shift_keeps_document_ranking(
        xs in prop::collection::vec(prop::collection::vec(-3.0f32..3.0, 3), 2..20),
        w in prop::collection::vec(-2.0f32..2.0, 3),
        shift in -5.0f32..5.0,
    ) {
        let a = head(w.clone(), 0.0);
        let b = head(w, shift);
        let argmax = |h: &LinearHead| {
            let logits: Vec<f64> = xs.iter().map(|x| h.logit(x).unwrap()).collect();
            (0..logits.len()).max_by(|&i, &j| logits[i].total_cmp(&logits[j]).then(j.cmp(&i))).unwrap()
        };
        prop_assert_eq!(argmax(&a), argmax(&b));
    }
}
