//! im2col lowering of valid-mode convolutions to 2-D matrix products, plus
//! full-range (signed) weight handling.
//!
//! Convolution here is the DNN convention: cross-correlation, stride 1, no
//! padding, so a k x k kernel over an h x w image yields (h-k+1)(w-k+1)
//! sliding positions. Kernels and patches share one flattening order,
//! channel-major then row then column within the window; both paths read it
//! from [`patch_flat_index`].

use crate::circulant::{bcm_matvec_fft, BlockCirculantMatrix};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Channel-major, then row, then column position of a window element.
#[inline]
pub fn patch_flat_index(channel: usize, ky: usize, kx: usize, k: usize) -> usize {
    channel * k * k + ky * k + kx
}

/// C x H x W image (or feature-map stack) with finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Dimension("image dimensions must be positive".into()));
        }
        if data.len() != channels * height * width {
            return Err(Error::Dimension(format!(
                "image {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("image values must be finite".into()));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageTensor {
        ImageTensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// C_out kernels of shape k x k x C_in, stride 1, no padding.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet {
    c_out: usize,
    c_in: usize,
    k: usize,
    // kernel-major, then channel-major flattening per patch_flat_index
    data: Vec<f64>,
}

impl KernelSet {
    pub fn new(c_out: usize, c_in: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if c_out == 0 || c_in == 0 || k == 0 {
            return Err(Error::Dimension("kernel dimensions must be positive".into()));
        }
        if data.len() != c_out * c_in * k * k {
            return Err(Error::Dimension(format!(
                "kernel set needs {} values, got {}",
                c_out * c_in * k * k,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("kernel values must be finite".into()));
        }
        Ok(Self { c_out, c_in, k, data })
    }

    /// Replicate one 2-D kernel across every input channel of each output.
    pub fn from_single(kernel_2d: &[f64], k: usize, c_in: usize, c_out: usize) -> Result<Self> {
        if kernel_2d.len() != k * k {
            return Err(Error::Dimension(format!(
                "2-D kernel needs {} values, got {}",
                k * k,
                kernel_2d.len()
            )));
        }
        let mut data = Vec::with_capacity(c_out * c_in * k * k);
        for _ in 0..c_out * c_in {
            data.extend_from_slice(kernel_2d);
        }
        Self::new(c_out, c_in, k, data)
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn weight(&self, o: usize, c: usize, ky: usize, kx: usize) -> f64 {
        self.data[o * self.c_in * self.k * self.k + patch_flat_index(c, ky, kx, self.k)]
    }
}

/// im2col plan: the 2-D weight matrix plus the layout needed to undo it.
#[derive(Debug, Clone)]
pub struct LoweredConv {
    pub w2d: Matrix,
    pub c_out: usize,
    pub c_in: usize,
    pub k: usize,
}

impl LoweredConv {
    /// Sliding positions for an h x w input: (h-k+1)(w-k+1).
    pub fn column_count(&self, height: usize, width: usize) -> usize {
        (height - self.k + 1) * (width - self.k + 1)
    }
}

/// Stack each flattened kernel row-wise into a C_out x (k*k*C_in) matrix.
pub fn lower_kernels(kernels: &KernelSet) -> LoweredConv {
    let cols = kernels.k * kernels.k * kernels.c_in;
    let mut w2d = Matrix::zeros(kernels.c_out, cols);
    for o in 0..kernels.c_out {
        for c in 0..kernels.c_in {
            for ky in 0..kernels.k {
                for kx in 0..kernels.k {
                    w2d.set(
                        o,
                        patch_flat_index(c, ky, kx, kernels.k),
                        kernels.weight(o, c, ky, kx),
                    );
                }
            }
        }
    }
    LoweredConv {
        w2d,
        c_out: kernels.c_out,
        c_in: kernels.c_in,
        k: kernels.k,
    }
}

/// Inverse of [`lower_kernels`].
pub fn unlower_kernels(lowered: &LoweredConv) -> Result<KernelSet> {
    let k = lowered.k;
    let mut data = Vec::with_capacity(lowered.c_out * lowered.c_in * k * k);
    for o in 0..lowered.c_out {
        for c in 0..lowered.c_in {
            for ky in 0..k {
                for kx in 0..k {
                    data.push(lowered.w2d.get(o, patch_flat_index(c, ky, kx, k)));
                }
            }
        }
    }
    KernelSet::new(lowered.c_out, lowered.c_in, k, data)
}

/// Unroll sliding windows into columns: (k*k*C) x ((h-k+1)(w-k+1)), sweep
/// row-major over window positions.
pub fn im2col(img: &ImageTensor, k: usize) -> Result<Matrix> {
    if k == 0 || k > img.height() || k > img.width() {
        return Err(Error::Dimension(format!(
            "window {k} exceeds image {}x{}",
            img.height(),
            img.width()
        )));
    }
    let (oh, ow) = (img.height() - k + 1, img.width() - k + 1);
    let mut out = Matrix::zeros(k * k * img.channels(), oh * ow);
    for y in 0..oh {
        for x in 0..ow {
            let col = y * ow + x;
            for c in 0..img.channels() {
                for ky in 0..k {
                    for kx in 0..k {
                        out.set(
                            patch_flat_index(c, ky, kx, k),
                            col,
                            img.get(c, y + ky, x + kx),
                        );
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Shared-kernel layout: one 2-D kernel applied to every channel, channels
/// stacked along columns instead of rows. Yields k^2 x (C*(h-k+1)(w-k+1)),
/// channel-major column order.
pub fn im2col_shared(img: &ImageTensor, k: usize) -> Result<Matrix> {
    if k == 0 || k > img.height() || k > img.width() {
        return Err(Error::Dimension(format!(
            "window {k} exceeds image {}x{}",
            img.height(),
            img.width()
        )));
    }
    let (oh, ow) = (img.height() - k + 1, img.width() - k + 1);
    let positions = oh * ow;
    let mut out = Matrix::zeros(k * k, img.channels() * positions);
    for c in 0..img.channels() {
        for y in 0..oh {
            for x in 0..ow {
                let col = c * positions + y * ow + x;
                for ky in 0..k {
                    for kx in 0..k {
                        out.set(ky * k + kx, col, img.get(c, y + ky, x + kx));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Textbook valid-mode cross-correlation; the oracle for all lowered paths.
pub fn conv_direct(img: &ImageTensor, kernels: &KernelSet) -> Result<ImageTensor> {
    if kernels.c_in != img.channels() {
        return Err(Error::Dimension(format!(
            "kernel expects {} input channels, image has {}",
            kernels.c_in,
            img.channels()
        )));
    }
    let k = kernels.k;
    if k > img.height() || k > img.width() {
        return Err(Error::Dimension(format!(
            "window {k} exceeds image {}x{}",
            img.height(),
            img.width()
        )));
    }
    let (oh, ow) = (img.height() - k + 1, img.width() - k + 1);
    ImageTensor::from_fn(kernels.c_out, oh, ow, |o, y, x| {
        let mut acc = 0.0;
        for c in 0..kernels.c_in {
            for ky in 0..k {
                for kx in 0..k {
                    acc += kernels.weight(o, c, ky, kx) * img.get(c, y + ky, x + kx);
                }
            }
        }
        acc
    })
}

/// Convolution through a block-circulant weight matrix: each im2col column
/// is zero-padded to the BCM width and multiplied on the frequency path;
/// output rows reshape back to feature maps.
pub fn conv_via_bcm(
    img: &ImageTensor,
    w: &BlockCirculantMatrix,
    meta: &LoweredConv,
) -> Result<ImageTensor> {
    let cols = im2col(img, meta.k)?;
    let logical_rows = meta.c_out;
    let logical_cols = meta.k * meta.k * meta.c_in;
    if w.cols() < logical_cols || w.rows() < logical_rows {
        return Err(Error::Dimension(format!(
            "BCM {}x{} smaller than lowered dims {}x{}",
            w.rows(),
            w.cols(),
            logical_rows,
            logical_cols
        )));
    }
    let (oh, ow) = (img.height() - meta.k + 1, img.width() - meta.k + 1);
    let mut out = vec![0.0; logical_rows * oh * ow];
    let mut padded = vec![0.0; w.cols()];
    for col in 0..cols.cols() {
        padded.fill(0.0);
        for r in 0..logical_cols {
            padded[r] = cols.get(r, col);
        }
        let y = bcm_matvec_fft(w, &padded)?;
        for (o, out_row) in y.iter().take(logical_rows).enumerate() {
            out[o * oh * ow + col] = *out_row;
        }
    }
    ImageTensor::new(logical_rows, oh, ow, out)
}

/// Split a signed matrix by element sign: `W = W_pos - W_neg`, both
/// nonnegative.
pub fn sign_split(w2d: &Matrix) -> (Matrix, Matrix) {
    let mut pos = Matrix::zeros(w2d.rows(), w2d.cols());
    let mut neg = Matrix::zeros(w2d.rows(), w2d.cols());
    for i in 0..w2d.rows() {
        for j in 0..w2d.cols() {
            let v = w2d.get(i, j);
            pos.set(i, j, v.max(0.0));
            neg.set(i, j, (-v).max(0.0));
        }
    }
    (pos, neg)
}

/// Bias-shift encoding of a signed matrix into [0, 1] plus the constant
/// reference matrix encoding zero.
#[derive(Debug, Clone)]
pub struct BiasShift {
    pub shifted: Matrix,
    pub reference: Matrix,
    pub min: f64,
    pub range: f64,
    /// Mid-level code of zero; clamped into [0, 1] when W is one-signed.
    pub ref_level: f64,
    /// Constant-matrix input: the shifted pass carries no information.
    pub degenerate: bool,
}

impl BiasShift {
    /// Undo the encoding: `range * (out_shifted - out_reference) +
    /// correction`, where the correction term `(min + ref_level * range) *
    /// sum(x)` vanishes whenever zero lies inside the dynamic range.
    pub fn reconstruct(
        &self,
        out_shifted: &[f64],
        out_reference: &[f64],
        input_sum: f64,
    ) -> Vec<f64> {
        if self.degenerate {
            return out_reference
                .iter()
                .map(|_| self.min * input_sum)
                .collect();
        }
        let correction = (self.min + self.ref_level * self.range) * input_sum;
        out_shifted
            .iter()
            .zip(out_reference)
            .map(|(s, r)| self.range * (s - r) + correction)
            .collect()
    }
}

pub fn bias_shift(w2d: &Matrix) -> BiasShift {
    let min = w2d.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let max = w2d.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range == 0.0 {
        return BiasShift {
            shifted: Matrix::zeros(w2d.rows(), w2d.cols()),
            reference: w2d.clone(),
            min,
            range,
            ref_level: 0.0,
            degenerate: true,
        };
    }
    let mut shifted = Matrix::zeros(w2d.rows(), w2d.cols());
    for i in 0..w2d.rows() {
        for j in 0..w2d.cols() {
            shifted.set(i, j, (w2d.get(i, j) - min) / range);
        }
    }
    let ref_level = (-min / range).clamp(0.0, 1.0);
    let mut reference = Matrix::zeros(w2d.rows(), w2d.cols());
    for i in 0..w2d.rows() {
        for j in 0..w2d.cols() {
            reference.set(i, j, ref_level);
        }
    }
    BiasShift {
        shifted,
        reference,
        min,
        range,
        ref_level,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circulant::{bcm_project, circulant_extend_kernel};
    use crate::linalg::{max_abs_diff, rel_l2_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> ImageTensor {
        ImageTensor::from_fn(c, h, w, |_, _, _| rng.gen_range(0.0..1.0)).unwrap()
    }

    fn random_kernels(c_out: usize, c_in: usize, k: usize, rng: &mut ChaCha8Rng) -> KernelSet {
        let data = (0..c_out * c_in * k * k)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        KernelSet::new(c_out, c_in, k, data).unwrap()
    }

    #[test]
    fn lower_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = random_kernels(3, 2, 3, &mut rng);
        let lowered = lower_kernels(&k);
        assert_eq!(lowered.w2d.rows(), 3);
        assert_eq!(lowered.w2d.cols(), 18);
        assert_eq!(unlower_kernels(&lowered).unwrap(), k);
    }

    #[test]
    fn cout_by_kkcin_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = random_kernels(5, 3, 3, &mut rng);
        let lowered = lower_kernels(&k);
        assert_eq!((lowered.w2d.rows(), lowered.w2d.cols()), (5, 27));
    }

    #[test]
    fn im2col_window_one_is_flattened_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = random_image(2, 3, 3, &mut rng);
        let cols = im2col(&img, 1).unwrap();
        assert_eq!((cols.rows(), cols.cols()), (2, 9));
        for y in 0..3 {
            for x in 0..3 {
                for c in 0..2 {
                    assert_eq!(cols.get(c, y * 3 + x), img.get(c, y, x));
                }
            }
        }
    }

    #[test]
    fn im2col_entries_by_index_arithmetic() {
        let img = ImageTensor::from_fn(1, 4, 4, |_, y, x| (y * 4 + x) as f64).unwrap();
        let cols = im2col(&img, 3).unwrap();
        assert_eq!((cols.rows(), cols.cols()), (9, 4));
        for y in 0..2 {
            for x in 0..2 {
                for ky in 0..3 {
                    for kx in 0..3 {
                        assert_eq!(
                            cols.get(ky * 3 + kx, y * 2 + x),
                            ((y + ky) * 4 + (x + kx)) as f64
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn shared_layout_matches_blur_demo_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = random_image(3, 32, 32, &mut rng);
        let cols = im2col_shared(&img, 3).unwrap();
        assert_eq!((cols.rows(), cols.cols()), (9, 2700));
    }

    #[test]
    fn conv_direct_identity_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let img = random_image(2, 4, 4, &mut rng);
        // 1x1 kernel of ones sums over input channels.
        let k = KernelSet::new(1, 2, 1, vec![1.0, 1.0]).unwrap();
        let out = conv_direct(&img, &k).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                assert!((out.get(0, y, x) - img.get(0, y, x) - img.get(1, y, x)).abs() < 1e-12);
            }
        }
        let zero = KernelSet::new(2, 2, 3, vec![0.0; 36]).unwrap();
        let out = conv_direct(&img, &zero).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_direct_matches_hand_unrolled() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let img = random_image(1, 5, 5, &mut rng);
        let k = random_kernels(1, 1, 3, &mut rng);
        let out = conv_direct(&img, &k).unwrap();
        for y in 0..3 {
            for x in 0..3 {
                let mut want = 0.0;
                for ky in 0..3 {
                    for kx in 0..3 {
                        want += k.weight(0, 0, ky, kx) * img.get(0, y + ky, x + kx);
                    }
                }
                assert!((out.get(0, y, x) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lowered_equivalence_small_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for k in 1..=4usize {
            for c in 1..=2usize {
                let (h, w) = (k + 3, k + 2);
                let img = random_image(c, h, w, &mut rng);
                let kernels = random_kernels(2, c, k, &mut rng);
                let lowered = lower_kernels(&kernels);
                let cols = im2col(&img, k).unwrap();
                let prod = lowered.w2d.matmul(&cols).unwrap();
                let direct = conv_direct(&img, &kernels).unwrap();
                assert!(max_abs_diff(prod.data(), direct.data()) < 1e-12);
            }
        }
    }

    #[test]
    fn conv_via_bcm_agrees_with_direct_for_circulant_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = random_image(1, 6, 6, &mut rng);
        // Build a kernel set whose lowered matrix is exactly block-circulant.
        let l = 4;
        let kernels = random_kernels(4, 1, 2, &mut rng); // 4 x 4 lowered
        let lowered = lower_kernels(&kernels);
        let w = bcm_project(&lowered.w2d, l).unwrap();
        let circ_kernels = unlower_kernels(&LoweredConv {
            w2d: crate::circulant::bcm_expand(&w),
            c_out: 4,
            c_in: 1,
            k: 2,
        })
        .unwrap();
        let via_bcm = conv_via_bcm(&img, &w, &lowered).unwrap();
        let direct = conv_direct(&img, &circ_kernels).unwrap();
        assert!(rel_l2_error(via_bcm.data(), direct.data()) < 1e-9);
    }

    #[test]
    fn extended_kernel_column_equals_direct_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let img = random_image(1, 8, 8, &mut rng);
        let kernel: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let kset = KernelSet::new(1, 1, 3, kernel.clone()).unwrap();
        let direct = conv_direct(&img, &kset).unwrap();
        let ext = circulant_extend_kernel(&kernel, 4).unwrap();
        let cols = im2col(&img, 3).unwrap();
        for col in 0..cols.cols() {
            let x: Vec<f64> = (0..9).map(|r| cols.get(r, col)).collect();
            let got = ext.apply_dot(&x).unwrap();
            assert!((got - direct.data()[col]).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_split_reconstructs() {
        let sobel = Matrix::from_rows(&[vec![1.0, 0.0, -1.0, 2.0, 0.0, -2.0, 1.0, 0.0, -1.0]])
            .unwrap();
        let (pos, neg) = sign_split(&sobel);
        assert!(pos.data().iter().all(|&v| v >= 0.0));
        assert!(neg.data().iter().all(|&v| v >= 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..9).map(|_| rng.gen_range(0.0..1.0)).collect();
        let direct = sobel.matvec(&x).unwrap();
        let recon: Vec<f64> = pos
            .matvec(&x)
            .unwrap()
            .iter()
            .zip(neg.matvec(&x).unwrap())
            .map(|(p, n)| p - n)
            .collect();
        assert!(max_abs_diff(&recon, &direct) < 1e-12);

        let all_pos = Matrix::from_rows(&[vec![0.5, 1.0]]).unwrap();
        let (_, n) = sign_split(&all_pos);
        assert!(n.data().iter().all(|&v| v == 0.0));
        let neg_ident = Matrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        let (p, n) = sign_split(&neg_ident);
        assert!(p.data().iter().all(|&v| v == 0.0));
        assert_eq!(n.get(0, 0), 1.0);
        assert_eq!(n.get(1, 1), 1.0);
    }

    #[test]
    fn bias_shift_reconstructs_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let w = Matrix::from_vec(3, 4, (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let enc = bias_shift(&w);
        assert!(!enc.degenerate);
        assert!(enc.shifted.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
        let direct = w.matvec(&x).unwrap();
        let out_s = enc.shifted.matvec(&x).unwrap();
        let out_r = enc.reference.matvec(&x).unwrap();
        let recon = enc.reconstruct(&out_s, &out_r, x.iter().sum());
        assert!(max_abs_diff(&recon, &direct) < 1e-12);
    }

    #[test]
    fn bias_shift_cancels_common_offset() {
        let w = Matrix::from_rows(&[vec![0.3, -0.7], vec![1.2, 0.1]]).unwrap();
        let enc = bias_shift(&w);
        let x = [0.4, 0.9];
        let out_s = enc.shifted.matvec(&x).unwrap();
        let out_r = enc.reference.matvec(&x).unwrap();
        let base = enc.reconstruct(&out_s, &out_r, x.iter().sum());
        let offset = 0.731;
        let out_s2: Vec<f64> = out_s.iter().map(|v| v + offset).collect();
        let out_r2: Vec<f64> = out_r.iter().map(|v| v + offset).collect();
        let shifted = enc.reconstruct(&out_s2, &out_r2, x.iter().sum());
        assert!(max_abs_diff(&base, &shifted) < 1e-12);
    }

    #[test]
    fn bias_shift_degenerate_constant_matrix() {
        let w = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let enc = bias_shift(&w);
        assert!(enc.degenerate);
        let x = [0.2, 0.3];
        let recon = enc.reconstruct(&[0.0, 0.0], &[0.0, 0.0], x.iter().sum());
        let direct = w.matvec(&x).unwrap();
        assert!(max_abs_diff(&recon, &direct) < 1e-12);
    }

    #[test]
    fn already_normalized_matrix_shifts_to_itself() {
        let w = Matrix::from_rows(&[vec![0.0, 0.25], vec![0.75, 1.0]]).unwrap();
        let enc = bias_shift(&w);
        assert_eq!(enc.min, 0.0);
        assert_eq!(enc.range, 1.0);
        assert!(max_abs_diff(enc.shifted.data(), w.data()) < 1e-15);
        assert_eq!(enc.ref_level, 0.0);
    }
}
