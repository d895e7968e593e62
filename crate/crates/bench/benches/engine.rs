//! Forward/backward/optimizer throughput at the training batch shape.

use criterion::{criterion_group, criterion_main, Criterion};
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

use intentforge_core::nn::adam::{adam_step, AdamState};
use intentforge_core::nn::loss::ClassWeights;
use intentforge_core::nn::lstm::{lstm_backward, lstm_forward, LstmParams};
use intentforge_core::nn::model::{init_params, model_backward, model_forward};
use intentforge_core::tensor::Matrix;

const STATE_SIZE: usize = 68;
const BATCH: usize = 32;

fn bench_lstm(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = LstmParams::init(STATE_SIZE, 64, &mut rng).unwrap();
    let inputs: Vec<Matrix> = (0..8)
        .map(|_| Matrix::from_fn(BATCH, STATE_SIZE, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    let zero = Matrix::zeros(BATCH, 64);

    c.bench_function("lstm64_forward_t8_b32", |b| {
        b.iter(|| lstm_forward(&params, &inputs, &zero, &zero, false).unwrap())
    });

    let out = lstm_forward(&params, &inputs, &zero, &zero, true).unwrap();
    let cache = out.cache.unwrap();
    let grads: Vec<Matrix> = (0..8)
        .map(|_| Matrix::from_fn(BATCH, 64, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    c.bench_function("lstm64_backward_t8_b32", |b| {
        b.iter(|| lstm_backward(&params, &cache, &grads).unwrap())
    });
}

fn bench_training_step(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut params = init_params(STATE_SIZE, 2).unwrap();
    params.dropout_rate = 0.2;
    let batch: Vec<Matrix> = vec![Matrix::from_fn(BATCH, STATE_SIZE, |_, _| {
        rng.gen_range(0.0..1.0)
    })];
    let labels: Vec<f64> = (0..BATCH).map(|i| f64::from(i % 5 == 0)).collect();
    let weights = ClassWeights { w0: 0.6, w1: 3.0 };
    let mut adam = AdamState::new(&params);

    c.bench_function("train_step_b32", |b| {
        b.iter(|| {
            let (probs, cache) = model_forward(&mut params, &batch, true, &mut rng).unwrap();
            let grads = model_backward(&params, cache.as_ref(), &probs, &labels, weights).unwrap();
            adam_step(&mut params, &grads, &mut adam, 0.001).unwrap();
        })
    });
}

criterion_group!(benches, bench_lstm, bench_training_step);
criterion_main!(benches);
