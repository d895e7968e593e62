//! Property tests for the metric and featurization invariants.

use proptest::prelude::*;

use intentforge_core::metrics::{confusion, report, roc_auc};
use intentforge_core::pipeline::{
    build_schema, featurize, EventType, FeatureMode, RawEvent, Session, VocabCaps,
};

fn labeled_scores() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    prop::collection::vec((0..=20u32, prop::bool::ANY), 2..200).prop_map(|pairs| {
        let mut probs: Vec<f64> = pairs.iter().map(|(p, _)| *p as f64 / 20.0).collect();
        let mut labels: Vec<f64> = pairs.iter().map(|(_, y)| f64::from(*y)).collect();
        // Force both classes.
        probs.push(0.9);
        labels.push(1.0);
        probs.push(0.1);
        labels.push(0.0);
        (probs, labels)
    })
}

proptest! {
    /// Counts and rates always match a naive per-sample recomputation.
    #[test]
    fn report_matches_naive_recomputation(
        (probs, labels) in labeled_scores(),
        threshold in 0..=10u32,
    ) {
        let threshold = threshold as f64 / 10.0;
        let cm = confusion(&probs, &labels, threshold).unwrap();
        let mut counts = [0u64; 4]; // tn, fp, fn, tp
        for (&p, &y) in probs.iter().zip(&labels) {
            let idx = match (y >= 0.5, p >= threshold) {
                (false, false) => 0,
                (false, true) => 1,
                (true, false) => 2,
                (true, true) => 3,
            };
            counts[idx] += 1;
        }
        prop_assert_eq!((cm.tn, cm.fp, cm.fn_, cm.tp), (counts[0], counts[1], counts[2], counts[3]));

        let r = report(&cm).unwrap();
        let naive_accuracy = (counts[0] + counts[3]) as f64 / probs.len() as f64;
        prop_assert!((r.accuracy - naive_accuracy).abs() < 1e-15);
        let predicted_pos = counts[1] + counts[3];
        let naive_p1 = if predicted_pos == 0 { 0.0 } else { counts[3] as f64 / predicted_pos as f64 };
        prop_assert!((r.class1.precision - naive_p1).abs() < 1e-15);
    }

    /// AUC depends only on the score ordering; any strictly increasing
    /// transform that stays finite (and so tie-free) leaves it unchanged.
    #[test]
    fn auc_is_rank_invariant(
        (probs, labels) in labeled_scores(),
        scale in 1e-3..1e3f64,
        offset in -100.0..100.0f64,
    ) {
        let base = roc_auc(&probs, &labels).unwrap().auc;
        let affine: Vec<f64> = probs.iter().map(|&p| p * scale + offset).collect();
        prop_assert!((roc_auc(&affine, &labels).unwrap().auc - base).abs() < 1e-12);
        let squashed: Vec<f64> = probs.iter().map(|&p| (3.0 * p).exp_m1()).collect();
        prop_assert!((roc_auc(&squashed, &labels).unwrap().auc - base).abs() < 1e-12);
    }
}

fn arbitrary_session() -> impl Strategy<Value = Session> {
    prop::collection::vec(
        (
            0..5000i64,
            0..3usize,
            0..30u32,
            prop::option::of(0..6u32),
            prop::option::of(0..8u32),
            0..100_000u32,
        ),
        1..20,
    )
    .prop_map(|rows| {
        let mut events: Vec<RawEvent> = rows
            .into_iter()
            .map(|(t, ty, product, code, brand, cents)| RawEvent {
                event_time: t,
                event_type: [EventType::View, EventType::Cart, EventType::View][ty],
                product_id: format!("p{product}"),
                category_id: "c".to_string(),
                category_code: code.map(|c| format!("cat.{c}")),
                brand: brand.map(|b| format!("brand{b}")),
                price: cents as f64 / 100.0,
                user_id: "u".to_string(),
                user_session: "s".to_string(),
            })
            .collect();
        events.sort_by_key(|e| e.event_time);
        Session {
            session_id: "s".to_string(),
            user_id: "u".to_string(),
            events,
            label: 0,
        }
    })
}

proptest! {
    /// Featurized rows always stay in [0,1] and one-hot groups sum to
    /// exactly 1, for training-range and out-of-range sessions alike.
    #[test]
    fn featurize_invariants_hold(
        train in prop::collection::vec(arbitrary_session(), 1..6),
        probe in arbitrary_session(),
    ) {
        for mode in [FeatureMode::Flat, FeatureMode::Sequence] {
            let schema = build_schema(&train, VocabCaps { category_code: 4, brand: 4 }, mode).unwrap();
            let rows = featurize(&probe, &schema, mode).unwrap();
            let layout = schema.layout();
            for row in &rows {
                prop_assert_eq!(row.len(), schema.state_size);
                for &v in row {
                    prop_assert!((0.0..=1.0).contains(&v), "value {} out of range", v);
                }
                for group in layout.one_hot_groups() {
                    let sum: f64 = row[group.start..group.start + group.len].iter().sum();
                    prop_assert_eq!(sum, 1.0, "group {} sums to {}", &group.name, sum);
                }
            }
        }
    }
}
