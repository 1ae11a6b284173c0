//! Scratch experiment (removed before ship).
use cptc_core::nn::data::synthetic_digits;
use cptc_core::nn::gamma::{fit_gamma, probe_tile_response};
use cptc_core::nn::graph::desk_cnn;
use cptc_core::nn::infer::{infer, InferMode, InferOptions};
use cptc_core::nn::train::{train, TrainConfig, TrainMode};
use cptc_core::quant::QuantSpec;
use cptc_core::sim::{DeviceProfile, NoiseModel, TileConfig};

fn stress_tile(switch_q: f64, sigma: f64) -> TileConfig {
    let mut p = DeviceProfile::prototype();
    p.switch_ring.quality_factor = switch_q;
    p.noise = NoiseModel { sigma_rel: sigma, seed: 0, enabled: sigma > 0.0 };
    TileConfig::new(4, p).unwrap()
}

#[test]
#[ignore]
fn probe_robustness() {
    let wq = Some(QuantSpec::new(6, -1.0, 1.0).unwrap());
    let aq = Some(QuantSpec::new(4, 0.0, 1.0).unwrap());
    let qs: Vec<f64> = vec![1000.0, 800.0, 600.0];
    for switch_q in qs {
    let (sigma, sigma_train, epochs) = (0.01, 0.005, 60);
    let mut wins = 0;
    for seed in 0..5u64 {
        let train_set = synthetic_digits(80, 900 + seed).unwrap();
        let test_set = synthetic_digits(15, 9000 + seed).unwrap();
        let cfg = |mode, noise| TrainConfig {
            mode, learning_rate: 0.03, momentum: 0.9, batch_size: 16,
            epochs, seed: 70 + seed, noise_sigma_rel: noise,
            weight_quant: wq, act_quant: aq,
        };
        let fit_tile = stress_tile(switch_q, 0.0);
        let gamma = fit_gamma(&probe_tile_response(&fit_tile, 256, 5).unwrap()).unwrap().gamma;

        let mut dig = desk_cnn(true, 300 + seed).unwrap();
        train(&mut dig, &train_set, &cfg(TrainMode::Digital, 0.0), None).unwrap();
        let mut dpe = desk_cnn(true, 300 + seed).unwrap();
        train(&mut dpe, &train_set, &cfg(TrainMode::DpeDifferentiable, sigma_train), Some(&gamma)).unwrap();

        let digital_opts = InferOptions { mode: InferMode::Digital, weight_quant: wq, act_quant: aq, gamma: None, tile: None, seed: 0 };
        let clean_dig = infer(&dig, &test_set, &digital_opts).unwrap().accuracy;
        let clean_dpe = infer(&dpe, &test_set, &digital_opts).unwrap().accuracy;

        let noisy_tile = stress_tile(switch_q, sigma);
        let lookup_opts = InferOptions {
            mode: InferMode::Lookup, weight_quant: wq, act_quant: aq,
            gamma: None, tile: Some(noisy_tile.clone()), seed: 1000 + seed,
        };
        let noisy_dig = infer(&dig, &test_set, &lookup_opts).unwrap().accuracy;
        let lookup_opts2 = InferOptions {
            mode: InferMode::Lookup, weight_quant: wq, act_quant: aq,
            gamma: None, tile: Some(noisy_tile), seed: 1000 + seed,
        };
        let noisy_dpe = infer(&dpe, &test_set, &lookup_opts2).unwrap().accuracy;
        let drop_dig = clean_dig - noisy_dig;
        let drop_dpe = clean_dpe - noisy_dpe;
        if drop_dpe < drop_dig { wins += 1; }
        println!("seed={seed}: dig {clean_dig:.3}->{noisy_dig:.3} (drop {drop_dig:.3}); dpe {clean_dpe:.3}->{noisy_dpe:.3} (drop {drop_dpe:.3})");
    }
    println!("q={switch_q} wins {wins}/5");
    }
}
