//! Trainer behavior: sanity floor, loss trend, structure preservation,
//! determinism and failure diagnostics.

use cptc_core::circulant::{bcm_expand, bcm_project, BlockCirculantMatrix};
use cptc_core::nn::data::{separable_blobs, synthetic_digits};
use cptc_core::nn::graph::{desk_cnn, tiny_mlp};
use cptc_core::nn::infer::{infer, InferMode, InferOptions};
use cptc_core::nn::layers::{Layer, WeightKind};
use cptc_core::nn::train::{train, TrainConfig, TrainMode};
use cptc_core::quant::QuantSpec;

fn quant_pair() -> (QuantSpec, QuantSpec) {
    (
        QuantSpec::new(6, -1.0, 1.0).unwrap(),
        QuantSpec::new(4, 0.0, 1.0).unwrap(),
    )
}

fn digital_cfg(epochs: usize, seed: u64) -> TrainConfig {
    let (wq, aq) = quant_pair();
    TrainConfig {
        mode: TrainMode::Digital,
        learning_rate: 0.03,
        momentum: 0.9,
        batch_size: 16,
        epochs,
        seed,
        noise_sigma_rel: 0.0,
        weight_quant: Some(wq),
        act_quant: Some(aq),
    }
}

#[test]
fn separable_blobs_reach_sanity_floor() {
    let data = separable_blobs(60, 3).unwrap();
    let mut model = tiny_mlp(2, 8, 2, 4).unwrap();
    let cfg = TrainConfig {
        mode: TrainMode::Digital,
        learning_rate: 0.1,
        momentum: 0.9,
        batch_size: 8,
        epochs: 50,
        seed: 5,
        noise_sigma_rel: 0.0,
        weight_quant: None,
        act_quant: None,
    };
    let history = train(&mut model, &data, &cfg, None).unwrap();
    let last = history.epochs.last().unwrap();
    assert!(
        last.train_accuracy >= 0.99,
        "expected >= 99% on a separable task, got {}",
        last.train_accuracy
    );
}

#[test]
fn digit_training_loss_trends_down_across_seeds() {
    for seed in 0..5u64 {
        let data = synthetic_digits(12, 100 + seed).unwrap();
        let mut model = desk_cnn(true, 200 + seed).unwrap();
        let history = train(&mut model, &data, &digital_cfg(6, seed), None).unwrap();
        let first = history.epochs.first().unwrap().mean_loss;
        let last = history.epochs.last().unwrap().mean_loss;
        assert!(
            last < first,
            "seed {seed}: loss should trend down, {first} -> {last}"
        );
    }
}

#[test]
fn desk_cnn_learns_digits() {
    let train_set = synthetic_digits(40, 900).unwrap();
    let test_set = synthetic_digits(15, 901).unwrap();
    let mut model = desk_cnn(true, 77).unwrap();
    let history = train(&mut model, &train_set, &digital_cfg(30, 7), None).unwrap();
    println!("history: {:?}", history.epochs.last());
    let (wq, aq) = quant_pair();
    let result = infer(
        &model,
        &test_set,
        &InferOptions {
            mode: InferMode::Digital,
            weight_quant: Some(wq),
            act_quant: Some(aq),
            gamma: None,
            tile: None,
            seed: 0,
        },
    )
    .unwrap();
    println!("test accuracy: {}", result.accuracy);
    assert!(
        result.accuracy >= 0.8,
        "desk model should learn the digits, got {}",
        result.accuracy
    );
}

#[test]
fn training_never_leaves_the_circulant_manifold() {
    let data = synthetic_digits(6, 42).unwrap();
    let mut model = desk_cnn(true, 43).unwrap();
    train(&mut model, &data, &digital_cfg(2, 9), None).unwrap();
    for layer in &model.layers {
        let store = match layer {
            Layer::Linear(l) => &l.weights,
            Layer::Conv(c) => &c.weights,
            _ => continue,
        };
        let WeightKind::Circulant { order } = store.kind else {
            panic!("structured model must hold circulant stores");
        };
        let q = store.cols / order;
        let bcm = BlockCirculantMatrix::from_fn(store.rows / order, q, order, |p, qq| {
            let base = (p * q + qq) * order;
            store.params[base..base + order].to_vec()
        })
        .unwrap();
        let projected = bcm_project(&bcm_expand(&bcm), order).unwrap();
        assert_eq!(projected, bcm);
    }
}

#[test]
fn training_is_deterministic_for_a_seed() {
    let data = synthetic_digits(8, 50).unwrap();
    let mut a = desk_cnn(true, 51).unwrap();
    let mut b = desk_cnn(true, 51).unwrap();
    let ha = train(&mut a, &data, &digital_cfg(3, 52), None).unwrap();
    let hb = train(&mut b, &data, &digital_cfg(3, 52), None).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        ha.epochs.last().unwrap().mean_loss,
        hb.epochs.last().unwrap().mean_loss
    );
}

#[test]
fn non_finite_parameters_abort_with_an_error() {
    let data = separable_blobs(10, 1).unwrap();
    let mut model = tiny_mlp(2, 4, 2, 2).unwrap();
    if let Some((w, _)) = model.layers[0].params_mut() {
        w[0] = f64::NAN;
    }
    assert!(train(&mut model, &data, &digital_cfg(1, 1), None).is_err());
}

#[test]
fn desk_architecture_parameter_accounting() {
    let structured = desk_cnn(true, 1).unwrap();
    let dense = desk_cnn(false, 1).unwrap();
    // Order-4 conversion stores exactly a quarter of the scalars of every
    // conv and FC tensor: 75% reduction on those tensors.
    assert_eq!(structured.weight_scalars() * 4, structured.dense_equivalent_scalars());
    assert_eq!(dense.weight_scalars(), dense.dense_equivalent_scalars());
    assert_eq!(structured.dense_equivalent_scalars(), dense.weight_scalars());
    assert_eq!(structured.weight_scalars(), 424);
    assert_eq!(structured.dense_equivalent_scalars(), 1696);
}
