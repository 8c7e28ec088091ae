use proptest::prelude::*;

use scgan::checkpoint::{decode_checkpoint, encode_checkpoint};
use scgan::losses::{cross_entropy, l1_distance, total_objective};
use scgan::networks::init_parameters;
use scgan::optim::momentum_step;
use scgan::schedule::BatchSchedule;
use scgan::trainer::TrainState;
use scgan::types::{DomainKey, ImageShape, PseudoLabel, RunConfig};

fn probs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_filter_map("nonzero mass", |w| {
        let s: f64 = w.iter().sum();
        (s > 1e-9).then(|| w.iter().map(|x| x / s).collect())
    })
}

fn tiny() -> RunConfig {
    RunConfig {
        n_classes: 2,
        latent_dim: 3,
        image_shape: ImageShape::new(1, 1, 2),
        hidden: vec![4],
        classifier_hidden: vec![3],
        ..RunConfig::default()
    }
}

proptest! {
    #[test]
    fn l1_is_a_metric(a in prop::collection::vec(-5.0f64..5.0, 6), b in prop::collection::vec(-5.0f64..5.0, 6), c in prop::collection::vec(-5.0f64..5.0, 6)) {
        let ab = l1_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, l1_distance(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(l1_distance(&a, &a).unwrap(), 0.0);
        prop_assert!(ab <= l1_distance(&a, &c).unwrap() + l1_distance(&c, &b).unwrap() + 1e-12);
    }

    #[test]
    fn cross_entropy_is_nonnegative_and_finite(p in probs(4), label in 0usize..4) {
        let ce = cross_entropy(&p, label).unwrap();
        prop_assert!(ce >= 0.0 && ce.is_finite());
    }

    #[test]
    fn pseudo_labels_follow_the_strict_rule(p in probs(5), tau in 0.01f64..1.0) {
        let l = PseudoLabel::from_probs(&p, tau);
        let max = p.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert_eq!(l.confidence, max);
        prop_assert_eq!(l.class_id, p.iter().position(|&x| x == max).unwrap());
        prop_assert_eq!(l.accepted, max > tau);
    }

    #[test]
    fn acceptance_shrinks_as_threshold_rises(p in probs(3), t1 in 0.01f64..1.0, t2 in 0.01f64..1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        if PseudoLabel::from_probs(&p, hi).accepted {
            prop_assert!(PseudoLabel::from_probs(&p, lo).accepted);
        }
    }

    #[test]
    fn momentum_matches_the_recurrence(p in -3.0f64..3.0, g in -3.0f64..3.0, v in -3.0f64..3.0, lr in 1e-4f64..1.0, mu in 0.0f64..0.999) {
        let (p2, v2) = momentum_step(p, g, v, lr, mu);
        prop_assert_eq!(v2, mu * v + g);
        prop_assert_eq!(p2, p - lr * (mu * v + g));
    }

    #[test]
    fn total_is_the_weighted_sum(g in -10.0f64..10.0, d in -10.0f64..10.0, c in -10.0f64..10.0, gamma in 0.0f64..5.0) {
        prop_assert!((total_objective(g, d, c, gamma) - (g + d + gamma * c)).abs() < 1e-12);
    }

    #[test]
    fn batches_are_distinct_in_range_indices(len in 2usize..200, batch in 2usize..64, seed in any::<u64>(), step in 0u64..1000) {
        let s = BatchSchedule::new(len, batch, seed, 7);
        let idx = s.indices(step);
        prop_assert_eq!(idx.len(), batch.min(len));
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), idx.len());
        prop_assert!(idx.iter().all(|&i| i < len));
        prop_assert_eq!(idx, s.indices(step));
    }

    #[test]
    fn only_one_hot_keys_are_valid(a in -1.0f64..2.0, b in -1.0f64..2.0) {
        let ok = (a == 1.0 && b == 0.0) || (a == 0.0 && b == 1.0);
        prop_assert_eq!(DomainKey::new([a, b]).is_ok(), ok);
    }

    #[test]
    fn image_shape_text_round_trips(h in 1usize..64, w in 1usize..64, c in 1usize..8) {
        let s = ImageShape::new(h, w, c);
        prop_assert_eq!(s.to_string().parse::<ImageShape>().unwrap(), s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn checkpoints_round_trip(seed in any::<u64>(), step in any::<u64>(), init in 0u64..1000) {
        let state = TrainState { params: init_parameters(&tiny(), init), step, seed, history: Vec::new() };
        let bytes = encode_checkpoint(&state);
        prop_assert_eq!(decode_checkpoint(&bytes, &tiny()).unwrap(), state);
    }
}
