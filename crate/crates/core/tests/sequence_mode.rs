//! End-to-end run in sequence mode: one row per event, variable-length
//! sessions padded per batch during training, grouped by length at
//! inference.

use intentforge_core::metrics::roc_auc;
use intentforge_core::nn::model::init_params;
use intentforge_core::pipeline::{
    parse_events, prepare_dataset, sessionize, FeatureMode, PrepareOptions,
};
use intentforge_core::synth::{generate, GeneratorConfig};
use intentforge_core::trainer::{predict_probs, train, TrainConfig};

fn prepared(seed: u64) -> (intentforge_core::pipeline::DatasetSplit, usize) {
    let generated = generate(&GeneratorConfig {
        n_users: 400,
        seed,
        ..GeneratorConfig::default()
    })
    .unwrap();
    let parsed = parse_events(generated.csv_bytes.as_slice()).unwrap();
    let sessions = sessionize(parsed.events).unwrap();
    let (split, schema, _) = prepare_dataset(
        sessions,
        &PrepareOptions {
            mode: FeatureMode::Sequence,
            seed,
            ..PrepareOptions::default()
        },
    )
    .unwrap();
    (split, schema.state_size)
}

#[test]
fn sequence_mode_trains_and_separates_classes() {
    let (split, state_size) = prepared(606);
    // Per-event rows: sessions own contiguous variable-length row runs.
    assert!(split.train.n_rows() > split.train.n_sessions());

    let config = TrainConfig {
        max_epochs: 4,
        patience: 4,
        seed: 606,
        ..TrainConfig::default()
    };
    let params = init_params(state_size, 606).unwrap();
    let (checkpoint, history) = train(&config, &split, params).unwrap();
    assert_eq!(history.len(), 4);

    let probs = predict_probs(&checkpoint.params, &split.test).unwrap();
    assert_eq!(probs.len(), split.test.n_sessions());
    assert!(probs.iter().all(|p| p.is_finite() && *p > 0.0 && *p < 1.0));
    let auc = roc_auc(&probs, &split.test.labels).unwrap().auc;
    assert!(auc > 0.7, "sequence-mode test AUC {auc:.4}");
}

#[test]
fn sequence_mode_runs_are_deterministic() {
    let run = || {
        let (split, state_size) = prepared(607);
        let config = TrainConfig {
            max_epochs: 2,
            patience: 2,
            seed: 607,
            ..TrainConfig::default()
        };
        let params = init_params(state_size, 607).unwrap();
        let (checkpoint, _) = train(&config, &split, params).unwrap();
        predict_probs(&checkpoint.params, &split.test).unwrap()
    };
    assert_eq!(run(), run());
}
