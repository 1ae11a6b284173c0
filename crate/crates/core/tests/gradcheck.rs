//! Finite-difference verification of every analytic gradient, with the
//! quantizers bypassed, plus the dense-equivalence oracle for circulant
//! weight gradients.

use cptc_core::circulant::bcm_expand;
use cptc_core::linalg::Matrix;
use cptc_core::nn::exec::ExecCtx;
use cptc_core::nn::graph::{softmax_cross_entropy, LayerGraph};
use cptc_core::nn::layers::{
    BatchNormLayer, ConvLayer, Layer, LinearLayer, ParamGrads, Tensor, WeightKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;
const TOL: f64 = 1e-5;

enum CtxKind {
    Digital,
    Dpe(Matrix),
}

fn make_ctx(kind: &CtxKind) -> ExecCtx {
    let mut ctx = match kind {
        CtxKind::Digital => ExecCtx::digital(None, None, 0),
        CtxKind::Dpe(g) => ExecCtx::dpe(None, None, g.clone(), 0.0, 0),
    };
    ctx.training = true;
    ctx
}

fn loss_of(model: &LayerGraph, batch: &[Tensor], labels: &[usize], kind: &CtxKind) -> f64 {
    let mut ctx = make_ctx(kind);
    let (logits, _) = model.forward(batch, &mut ctx).unwrap();
    softmax_cross_entropy(&logits, labels).unwrap().0
}

fn analytic_grads(
    model: &LayerGraph,
    batch: &[Tensor],
    labels: &[usize],
    kind: &CtxKind,
) -> Vec<ParamGrads> {
    let mut ctx = make_ctx(kind);
    let (logits, caches) = model.forward(batch, &mut ctx).unwrap();
    let (_, dlogits) = softmax_cross_entropy(&logits, labels).unwrap();
    model.backward(&dlogits, &caches, &ctx).unwrap()
}

/// Central finite differences against the analytic gradient for every
/// parameter of every layer.
fn check_model(mut model: LayerGraph, batch: Vec<Tensor>, labels: Vec<usize>, kind: CtxKind) {
    let analytic = analytic_grads(&model, &batch, &labels, &kind);
    for li in 0..model.layers.len() {
        let (gw, gb): (Vec<f64>, Vec<f64>) = match &analytic[li] {
            ParamGrads::None => continue,
            ParamGrads::WeightsBias { weights, bias } => (weights.clone(), bias.clone()),
            ParamGrads::BatchNorm { gamma, beta } => (gamma.clone(), beta.clone()),
        };
        for (slot, expected) in [(0usize, gw), (1usize, gb)] {
            for idx in 0..expected.len() {
                let probe = |model: &mut LayerGraph, delta: f64| {
                    let (w, b) = model.layers[li].params_mut().unwrap();
                    let target = if slot == 0 { w } else { b };
                    target[idx] += delta;
                };
                probe(&mut model, H);
                let plus = loss_of(&model, &batch, &labels, &kind);
                probe(&mut model, -2.0 * H);
                let minus = loss_of(&model, &batch, &labels, &kind);
                probe(&mut model, H);
                let numeric = (plus - minus) / (2.0 * H);
                let denom = numeric.abs().max(expected[idx].abs()).max(1e-6);
                let rel = (numeric - expected[idx]).abs() / denom;
                assert!(
                    rel < TOL,
                    "layer {li} slot {slot} param {idx}: analytic {} vs numeric {numeric}",
                    expected[idx]
                );
            }
        }
    }
}

fn image_batch(c: usize, h: usize, w: usize, n: usize, seed: u64) -> (Vec<Tensor>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = (0..n)
        .map(|_| {
            Tensor::chw(c, h, w, (0..c * h * w).map(|_| rng.gen_range(0.05..0.95)).collect())
                .unwrap()
        })
        .collect();
    let labels = (0..n).map(|i| i % 3).collect();
    (batch, labels)
}

fn init(layer: &mut Layer, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if let Some((w, b)) = layer.params_mut() {
        for v in w.iter_mut() {
            *v = rng.gen_range(-0.6..0.6);
        }
        for v in b.iter_mut() {
            *v = rng.gen_range(-0.2..0.2);
        }
    }
}

fn graph(layers: Vec<Layer>, order: usize, classes: usize) -> LayerGraph {
    LayerGraph {
        layers,
        order,
        classes,
    }
}

#[test]
fn linear_dense_gradients() {
    let mut l = Layer::Linear(LinearLayer::new(6, 3, WeightKind::Dense).unwrap());
    init(&mut l, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch: Vec<Tensor> = (0..3)
        .map(|_| Tensor::Flat((0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    check_model(graph(vec![l], 1, 3), batch, vec![0, 1, 2], CtxKind::Digital);
}

#[test]
fn linear_circulant_gradients() {
    let mut l = Layer::Linear(LinearLayer::new(8, 8, WeightKind::Circulant { order: 4 }).unwrap());
    init(&mut l, 3);
    let mut head = Layer::Linear(LinearLayer::new(8, 3, WeightKind::Dense).unwrap());
    init(&mut head, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let batch: Vec<Tensor> = (0..3)
        .map(|_| Tensor::Flat((0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    check_model(
        graph(vec![l, Layer::Relu, head], 4, 3),
        batch,
        vec![2, 0, 1],
        CtxKind::Digital,
    );
}

#[test]
fn linear_circulant_gradients_with_crosstalk_operator() {
    let mut l = Layer::Linear(LinearLayer::new(8, 8, WeightKind::Circulant { order: 4 }).unwrap());
    init(&mut l, 6);
    let mut head = Layer::Linear(LinearLayer::new(8, 3, WeightKind::Dense).unwrap());
    init(&mut head, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut gamma = cptc_core::nn::gamma::identity_matrix(4);
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                gamma.set(i, j, rng.gen_range(-0.05..0.05));
            }
        }
    }
    let batch: Vec<Tensor> = (0..2)
        .map(|_| Tensor::Flat((0..8).map(|_| rng.gen_range(0.0..1.0)).collect()))
        .collect();
    // The surrogate operator multiplies activations on the way in; the
    // head is dense, so only the circulant layer sees it.
    check_model(
        graph(vec![l, Layer::Relu, head], 4, 3),
        batch,
        vec![1, 2],
        CtxKind::Dpe(gamma),
    );
}

#[test]
fn conv_dense_and_pool_gradients() {
    let mut c = Layer::Conv(ConvLayer::new(2, 3, 2, WeightKind::Dense).unwrap());
    init(&mut c, 9);
    let mut head = Layer::Linear(LinearLayer::new(12, 3, WeightKind::Dense).unwrap());
    init(&mut head, 10);
    let (batch, labels) = image_batch(2, 5, 5, 2, 11);
    check_model(
        graph(
            vec![c, Layer::Relu, Layer::MaxPool2, Layer::Flatten, head],
            1,
            3,
        ),
        batch,
        labels,
        CtxKind::Digital,
    );
}

#[test]
fn conv_circulant_and_avgpool_gradients() {
    let mut c = Layer::Conv(ConvLayer::new(1, 4, 2, WeightKind::Circulant { order: 4 }).unwrap());
    init(&mut c, 12);
    let mut head = Layer::Linear(LinearLayer::new(16, 3, WeightKind::Dense).unwrap());
    init(&mut head, 13);
    let (batch, labels) = image_batch(1, 5, 5, 2, 14);
    check_model(
        graph(
            vec![c, Layer::AvgPool2, Layer::Flatten, head],
            4,
            3,
        ),
        batch,
        labels,
        CtxKind::Digital,
    );
}

#[test]
fn batchnorm_gradients() {
    let mut c = Layer::Conv(ConvLayer::new(1, 3, 2, WeightKind::Dense).unwrap());
    init(&mut c, 15);
    let bn = Layer::BatchNorm(BatchNormLayer::new(3));
    let mut head = Layer::Linear(LinearLayer::new(27, 3, WeightKind::Dense).unwrap());
    init(&mut head, 16);
    let (batch, labels) = image_batch(1, 4, 4, 3, 17);
    check_model(
        graph(vec![c, bn, Layer::Relu, Layer::Flatten, head], 1, 3),
        batch,
        labels,
        CtxKind::Digital,
    );
}

#[test]
fn zero_upstream_gradient_zeroes_parameters() {
    let mut l = Layer::Linear(LinearLayer::new(4, 4, WeightKind::Circulant { order: 4 }).unwrap());
    init(&mut l, 18);
    let model = graph(vec![l], 4, 4);
    let mut ctx = make_ctx(&CtxKind::Digital);
    let batch = vec![Tensor::Flat(vec![0.3, 0.2, 0.9, 0.1])];
    let (_, caches) = model.forward(&batch, &mut ctx).unwrap();
    let zero = vec![Tensor::Flat(vec![0.0; 4])];
    let grads = model.backward(&zero, &caches, &ctx).unwrap();
    match &grads[0] {
        ParamGrads::WeightsBias { weights, bias } => {
            assert!(weights.iter().all(|&g| g == 0.0));
            assert!(bias.iter().all(|&g| g == 0.0));
        }
        _ => panic!("expected weight grads"),
    }
}

/// Circulant weight gradient equals the dense layer's gradient summed
/// along each circulant diagonal of each block.
#[test]
fn circulant_gradient_matches_dense_diagonal_sums() {
    let order = 4;
    let mut circ =
        LinearLayer::new(8, 8, WeightKind::Circulant { order }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for v in circ.weights.params.iter_mut() {
        *v = rng.gen_range(-0.5..0.5);
    }
    // Dense twin with the expanded weights.
    let bcm = cptc_core::circulant::BlockCirculantMatrix::from_fn(2, 2, order, |p, q| {
        let base = (p * 2 + q) * order;
        circ.weights.params[base..base + order].to_vec()
    })
    .unwrap();
    let dense_w = bcm_expand(&bcm);
    let mut dense = LinearLayer::new(8, 8, WeightKind::Dense).unwrap();
    dense.weights.params = dense_w.data().to_vec();

    let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let labels = vec![3usize];
    let batch = vec![Tensor::Flat(x)];

    let circ_grads = analytic_grads(
        &graph(vec![Layer::Linear(circ)], order, 8),
        &batch,
        &labels,
        &CtxKind::Digital,
    );
    let dense_grads = analytic_grads(
        &graph(vec![Layer::Linear(dense)], 1, 8),
        &batch,
        &labels,
        &CtxKind::Digital,
    );
    let ParamGrads::WeightsBias { weights: gc, .. } = &circ_grads[0] else {
        panic!()
    };
    let ParamGrads::WeightsBias { weights: gd, .. } = &dense_grads[0] else {
        panic!()
    };
    for bp in 0..2 {
        for bq in 0..2 {
            for m in 0..order {
                let mut diag_sum = 0.0;
                for i in 0..order {
                    let row = bp * order + i;
                    let col = bq * order + (i + m) % order;
                    diag_sum += gd[row * 8 + col];
                }
                let got = gc[(bp * 2 + bq) * order + m];
                assert!(
                    (got - diag_sum).abs() < 1e-12,
                    "block ({bp},{bq}) diag {m}: {got} vs {diag_sum}"
                );
            }
        }
    }
}
