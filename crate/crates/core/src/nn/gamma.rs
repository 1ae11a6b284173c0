//! Fitting the linear crosstalk operator of a tile and the differentiable
//! surrogate forward pass built on it.
//!
//! The estimator models the tile's nonideal response as `y = W * (Gamma *
//! x)`: one square operator per tile size, fitted by least squares from
//! (input, measured output) sweeps taken with an identity weight program.

use crate::circulant::{bcm_matvec, BlockCirculantMatrix};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::quant::QuantSpec;
use crate::sim::{derive_seed, forward_physical, TileConfig};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Least-squares estimate of the tile's linear crosstalk operator.
#[derive(Debug, Clone)]
pub struct CrosstalkEstimate {
    pub gamma: Matrix,
    /// Root-mean-square residual per output element.
    pub fit_residual: f64,
    pub sample_count: usize,
    /// Ratio of the largest to smallest kept singular value of the design.
    pub condition: f64,
    /// Numerically rank-deficient design: minimal-norm solution returned.
    pub rank_deficient: bool,
}

/// Solve `Gamma = argmin |Y - Gamma X|` over paired samples. Fewer samples
/// than the tile dimension is an error; a numerically rank-deficient
/// design yields the minimal-norm solution with a warning flag.
pub fn fit_gamma(samples: &[(Vec<f64>, Vec<f64>)]) -> Result<CrosstalkEstimate> {
    let n = samples
        .first()
        .map(|(x, _)| x.len())
        .ok_or_else(|| Error::RankDeficient { needed: 1, got: 0 })?;
    if samples.len() < n {
        return Err(Error::RankDeficient {
            needed: n,
            got: samples.len(),
        });
    }
    for (x, y) in samples {
        if x.len() != n || y.len() != n {
            return Err(Error::Dimension(
                "all crosstalk samples must share the tile dimension".into(),
            ));
        }
    }
    let s = samples.len();
    // Rows are samples: design is S x N, targets S x N.
    let design = DMatrix::from_fn(s, n, |r, c| samples[r].0[c]);
    let targets = DMatrix::from_fn(s, n, |r, c| samples[r].1[c]);
    let svd = design.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let tol = smax * (s.max(n) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&v| v > tol).count();
    let smin_kept = svd
        .singular_values
        .iter()
        .cloned()
        .filter(|&v| v > tol)
        .fold(f64::INFINITY, f64::min);
    let solution = svd
        .solve(&targets, tol)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    // Solution columns are rows of gamma (design * sol ~ targets).
    let mut gamma = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            gamma.set(i, j, solution[(j, i)]);
        }
    }
    let residual = {
        let mut acc = 0.0;
        for (x, y) in samples {
            let pred = gamma.matvec(x)?;
            acc += pred
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        (acc / (s * n) as f64).sqrt()
    };
    Ok(CrosstalkEstimate {
        gamma,
        fit_residual: residual,
        sample_count: s,
        condition: if rank > 0 { smax / smin_kept } else { f64::INFINITY },
        rank_deficient: rank < n,
    })
}

/// Sweep the simulated tile with an identity weight program and random
/// on-codebook inputs, returning (input, response) pairs for fitting.
pub fn probe_tile_response(
    cfg: &TileConfig,
    count: usize,
    seed: u64,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let l = cfg.order;
    let mut identity = vec![0.0; l];
    identity[0] = cfg.profile.weight_quant.hi;
    let w = BlockCirculantMatrix::from_fn(1, 1, l, |_, _| identity.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = cfg.profile.input_quant.levels();
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let x: Vec<f64> = (0..l)
            .map(|_| cfg.profile.input_quant.value_of_code(rng.gen_range(0..levels)))
            .collect();
        let probe_cfg = cfg.with_seed(derive_seed(seed, i as u64));
        let y = forward_physical(&w, &x, &probe_cfg)?;
        samples.push((x, y));
    }
    Ok(samples)
}

/// Block-diagonal application of a tile-sized operator to each order-l
/// segment of a vector.
pub fn apply_gamma(x: &[f64], gamma: &Matrix) -> Result<Vec<f64>> {
    let l = gamma.rows();
    if gamma.cols() != l || x.len() % l != 0 {
        return Err(Error::Dimension(format!(
            "gamma is {}x{}, input length {}",
            gamma.rows(),
            gamma.cols(),
            x.len()
        )));
    }
    let mut out = Vec::with_capacity(x.len());
    for seg in x.chunks(l) {
        out.extend(gamma.matvec(seg)?);
    }
    Ok(out)
}

/// Transposed counterpart of [`apply_gamma`] for backpropagation.
pub fn apply_gamma_transpose(y: &[f64], gamma: &Matrix) -> Result<Vec<f64>> {
    let l = gamma.rows();
    if gamma.cols() != l || y.len() % l != 0 {
        return Err(Error::Dimension(format!(
            "gamma is {}x{}, input length {}",
            gamma.rows(),
            gamma.cols(),
            y.len()
        )));
    }
    let mut out = Vec::with_capacity(y.len());
    for seg in y.chunks(l) {
        out.extend(gamma.matvec_transpose(seg)?);
    }
    Ok(out)
}

/// Differentiable surrogate of the chip response: `W_q * (Gamma * x_q)`
/// plus optional zero-mean training noise (sigma relative to tile full
/// scale).
pub fn forward_dpe(
    w: &BlockCirculantMatrix,
    x: &[f64],
    gamma: &Matrix,
    weight_quant: Option<&QuantSpec>,
    input_quant: Option<&QuantSpec>,
    noise: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<Vec<f64>> {
    if gamma.rows() != w.order() {
        return Err(Error::Dimension(format!(
            "gamma is {}x{}, BCM order {}",
            gamma.rows(),
            gamma.cols(),
            w.order()
        )));
    }
    let wq = match weight_quant {
        Some(spec) => w.map(|v| spec.quantize(v)),
        None => w.clone(),
    };
    let xq = match input_quant {
        Some(spec) => spec.quantize_all(x),
        None => x.to_vec(),
    };
    let mixed = apply_gamma(&xq, gamma)?;
    let mut y = bcm_matvec(&wq, &mixed)?;
    if let Some((sigma_rel, rng)) = noise {
        if sigma_rel > 0.0 {
            let full_scale = w.order() as f64;
            let normal = Normal::new(0.0, sigma_rel * full_scale)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            for v in y.iter_mut() {
                *v += normal.sample(rng);
            }
        }
    }
    Ok(y)
}

pub fn identity_matrix(n: usize) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        m.set(i, i, 1.0);
    }
    m
}
