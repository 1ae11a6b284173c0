//! Network layers with hand-derived backward passes.
//!
//! The layer set is closed: circulant or dense MVM layers (linear and
//! convolutional), ReLU, 2x2 pooling, batch normalization and a flatten
//! shim. MVM layers quantize both operands on the way in (straight-through
//! estimator on the way back); everything else runs in full precision on
//! the digital side. Circulant layers store only their primary vectors, so
//! the structured constraint holds by construction at every step.

use crate::circulant::{bcm_matvec, bcm_matvec_transpose, BlockCirculantMatrix};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lowering::patch_flat_index;
use crate::nn::exec::{ExecCtx, Mode};
use crate::quant::QuantSpec;

/// Activation tensor: either a channel stack or a flat feature vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    Chw {
        c: usize,
        h: usize,
        w: usize,
        data: Vec<f64>,
    },
    Flat(Vec<f64>),
}

impl Tensor {
    pub fn flat(data: Vec<f64>) -> Self {
        Tensor::Flat(data)
    }

    pub fn chw(c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != c * h * w {
            return Err(Error::Dimension(format!(
                "tensor {c}x{h}x{w} needs {} values, got {}",
                c * h * w,
                data.len()
            )));
        }
        Ok(Tensor::Chw { c, h, w, data })
    }

    pub fn data(&self) -> &[f64] {
        match self {
            Tensor::Chw { data, .. } => data,
            Tensor::Flat(data) => data,
        }
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        match self {
            Tensor::Chw { data, .. } => data,
            Tensor::Flat(data) => data,
        }
    }

    pub fn len(&self) -> usize {
        self.data().len()
    }

    pub fn is_empty(&self) -> bool {
        self.data().is_empty()
    }

    pub fn same_shape_from(&self, data: Vec<f64>) -> Result<Tensor> {
        match self {
            Tensor::Chw { c, h, w, .. } => Tensor::chw(*c, *h, *w, data),
            Tensor::Flat(_) => Ok(Tensor::Flat(data)),
        }
    }
}

/// Storage layout of an MVM layer's weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    /// Block-circulant with the given order; params are primary vectors.
    Circulant { order: usize },
    /// Unstructured row-major matrix (the baseline).
    Dense,
}

/// Weight container shared by linear and convolutional layers. For the
/// circulant kind, `params` holds the primary vectors block-row-major and
/// `rows/cols` are the padded (block-aligned) dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    pub kind: WeightKind,
    pub rows: usize,
    pub cols: usize,
    pub params: Vec<f64>,
}

impl WeightStore {
    pub fn new(kind: WeightKind, logical_rows: usize, logical_cols: usize) -> Result<Self> {
        match kind {
            WeightKind::Circulant { order } => {
                if order == 0 {
                    return Err(Error::InvalidParameter("order must be >= 1".into()));
                }
                let rows = logical_rows.div_ceil(order) * order;
                let cols = logical_cols.div_ceil(order) * order;
                Ok(Self {
                    kind,
                    rows,
                    cols,
                    params: vec![0.0; rows * cols / order],
                })
            }
            WeightKind::Dense => Ok(Self {
                kind,
                rows: logical_rows,
                cols: logical_cols,
                params: vec![0.0; logical_rows * logical_cols],
            }),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn as_bcm(&self, quant: Option<&QuantSpec>) -> Result<BlockCirculantMatrix> {
        let WeightKind::Circulant { order } = self.kind else {
            return Err(Error::InvalidParameter("not a circulant store".into()));
        };
        let q = self.cols / order;
        BlockCirculantMatrix::from_fn(self.rows / order, q, order, |bp, bq| {
            let base = (bp * q + bq) * order;
            self.params[base..base + order]
                .iter()
                .map(|&v| quant.map_or(v, |s| s.quantize(v)))
                .collect()
        })
    }

    fn as_dense(&self, quant: Option<&QuantSpec>) -> Result<Matrix> {
        Matrix::from_vec(
            self.rows,
            self.cols,
            self.params
                .iter()
                .map(|&v| quant.map_or(v, |s| s.quantize(v)))
                .collect(),
        )
    }

    /// y = W_q x (x already padded to `cols`).
    pub fn matvec(&self, x: &[f64], quant: Option<&QuantSpec>) -> Result<Vec<f64>> {
        match self.kind {
            WeightKind::Circulant { .. } => bcm_matvec(&self.as_bcm(quant)?, x),
            WeightKind::Dense => self.as_dense(quant)?.matvec(x),
        }
    }

    /// x_grad = W_q^T delta.
    pub fn matvec_t(&self, delta: &[f64], quant: Option<&QuantSpec>) -> Result<Vec<f64>> {
        match self.kind {
            WeightKind::Circulant { .. } => bcm_matvec_transpose(&self.as_bcm(quant)?, delta),
            WeightKind::Dense => self.as_dense(quant)?.matvec_transpose(delta),
        }
    }

    /// Accumulate dL/dparams for one application with upstream `delta` and
    /// layer-side input `z` (post-crosstalk, post-quantization). Circulant
    /// gradients aggregate all rotated placements of each primary entry.
    pub fn accumulate_grad(&self, delta: &[f64], z: &[f64], grads: &mut [f64]) {
        match self.kind {
            WeightKind::Circulant { order } => {
                let (p_blocks, q_blocks) = (self.rows / order, self.cols / order);
                for bp in 0..p_blocks {
                    let dseg = &delta[bp * order..(bp + 1) * order];
                    for bq in 0..q_blocks {
                        let zseg = &z[bq * order..(bq + 1) * order];
                        let base = (bp * q_blocks + bq) * order;
                        for m in 0..order {
                            let mut acc = 0.0;
                            for (i, d) in dseg.iter().enumerate() {
                                acc += d * zseg[(i + m) % order];
                            }
                            grads[base + m] += acc;
                        }
                    }
                }
            }
            WeightKind::Dense => {
                for (i, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &mut grads[i * self.cols..(i + 1) * self.cols];
                    for (g, zv) in row.iter_mut().zip(z) {
                        *g += d * zv;
                    }
                }
            }
        }
    }
}

/// Fully connected layer over flat activations.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: WeightStore,
    pub bias: Vec<f64>,
}

/// Valid-mode convolution layer lowered through im2col.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub weights: WeightStore,
    pub bias: Vec<f64>,
}

/// Per-feature affine normalization with running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer {
    pub features: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormLayer {
    pub fn new(features: usize) -> Self {
        Self {
            features,
            gamma: vec![1.0; features],
            beta: vec![0.0; features],
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Linear(LinearLayer),
    Conv(ConvLayer),
    Relu,
    MaxPool2,
    AvgPool2,
    BatchNorm(BatchNormLayer),
    Flatten,
}

/// Per-layer forward cache consumed by the backward pass.
#[derive(Debug, Clone)]
pub enum LayerCache {
    Mvm {
        /// Pre-quantization input (padded), for the activation STE mask.
        x_raw: Vec<Vec<f64>>,
        /// Layer-side operand of the product (quantized, crosstalk-mixed).
        z: Vec<Vec<f64>>,
    },
    ConvMvm {
        x_raw: Vec<Tensor>,
        /// One (padded) z per im2col column, per sample.
        z: Vec<Vec<Vec<f64>>>,
        out_h: usize,
        out_w: usize,
    },
    Relu {
        mask: Vec<Vec<bool>>,
    },
    MaxPool {
        argmax: Vec<Vec<usize>>,
        in_shape: (usize, usize, usize),
    },
    AvgPool {
        in_shape: (usize, usize, usize),
    },
    BatchNorm {
        x_hat: Vec<Vec<f64>>,
        inv_std: Vec<f64>,
        group_size: usize,
    },
    Flatten {
        in_shape: (usize, usize, usize),
    },
}

/// Parameter gradients, laid out exactly like the layer's storage.
#[derive(Debug, Clone)]
pub enum ParamGrads {
    None,
    WeightsBias { weights: Vec<f64>, bias: Vec<f64> },
    BatchNorm { gamma: Vec<f64>, beta: Vec<f64> },
}

fn pad_to(x: &[f64], len: usize) -> Vec<f64> {
    let mut out = x.to_vec();
    out.resize(len, 0.0);
    out
}

/// STE mask: 1 inside the quantizer range, 0 outside.
fn ste_mask(raw: f64, spec: Option<&QuantSpec>) -> f64 {
    match spec {
        Some(s) if raw < s.lo || raw > s.hi => 0.0,
        _ => 1.0,
    }
}

impl LinearLayer {
    pub fn new(in_dim: usize, out_dim: usize, kind: WeightKind) -> Result<Self> {
        Ok(Self {
            in_dim,
            out_dim,
            weights: WeightStore::new(kind, out_dim, in_dim)?,
            bias: vec![0.0; out_dim],
        })
    }

    fn forward_one(&self, x: &[f64], ctx: &mut ExecCtx) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        if x.len() != self.in_dim {
            return Err(Error::Dimension(format!(
                "linear layer expects {} inputs, got {}",
                self.in_dim,
                x.len()
            )));
        }
        let x_raw = pad_to(x, self.weights.cols);
        let xq = match ctx.act_quant {
            Some(spec) => spec.quantize_all(&x_raw),
            None => x_raw.clone(),
        };
        let z = ctx.mix_input(&xq)?;
        let mut y = match ctx.mode {
            Mode::Lookup => ctx.physical_matvec(&self.weights, &xq)?,
            _ => self.weights.matvec(&z, ctx.weight_quant.as_ref())?,
        };
        ctx.add_training_noise(&mut y)?;
        y.truncate(self.out_dim);
        for (v, b) in y.iter_mut().zip(&self.bias) {
            *v += b;
        }
        Ok((y, x_raw, z))
    }

    fn backward_one(
        &self,
        delta: &[f64],
        x_raw: &[f64],
        z: &[f64],
        ctx: &ExecCtx,
        w_grads: &mut [f64],
        b_grads: &mut [f64],
    ) -> Result<Vec<f64>> {
        let delta_padded = pad_to(delta, self.weights.rows);
        for (g, d) in b_grads.iter_mut().zip(delta) {
            *g += d;
        }
        // Straight-through on the weight quantizer: gradient formed with
        // the layer-side operand z, masked where the raw weight is clamped.
        self.weights.accumulate_grad(&delta_padded, z, w_grads);
        for (g, raw) in w_grads.iter_mut().zip(&self.weights.params) {
            *g *= ste_mask(*raw, ctx.weight_quant.as_ref());
        }
        let upstream = self.weights.matvec_t(&delta_padded, ctx.weight_quant.as_ref())?;
        let mut dx = ctx.unmix_gradient(&upstream)?;
        for (g, raw) in dx.iter_mut().zip(x_raw) {
            *g *= ste_mask(*raw, ctx.act_quant.as_ref());
        }
        dx.truncate(self.in_dim);
        Ok(dx)
    }
}

impl ConvLayer {
    pub fn new(c_in: usize, c_out: usize, k: usize, kind: WeightKind) -> Result<Self> {
        Ok(Self {
            c_in,
            c_out,
            k,
            weights: WeightStore::new(kind, c_out, k * k * c_in)?,
            bias: vec![0.0; c_out],
        })
    }

    fn out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.k > h || self.k > w {
            return Err(Error::Dimension(format!(
                "window {} exceeds input {h}x{w}",
                self.k
            )));
        }
        Ok((h - self.k + 1, w - self.k + 1))
    }

    fn im2col_padded(&self, x: &Tensor, quant: Option<&QuantSpec>) -> Result<Vec<Vec<f64>>> {
        let Tensor::Chw { c, h, w, data } = x else {
            return Err(Error::Dimension("conv layer expects a channel stack".into()));
        };
        if *c != self.c_in {
            return Err(Error::Dimension(format!(
                "conv expects {} channels, got {c}",
                self.c_in
            )));
        }
        let (oh, ow) = self.out_dims(*h, *w)?;
        let k = self.k;
        let mut cols = Vec::with_capacity(oh * ow);
        for y0 in 0..oh {
            for x0 in 0..ow {
                let mut col = vec![0.0; self.weights.cols];
                for ch in 0..*c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let v = data[(ch * h + y0 + ky) * w + x0 + kx];
                            col[patch_flat_index(ch, ky, kx, k)] =
                                quant.map_or(v, |s| s.quantize(v));
                        }
                    }
                }
                cols.push(col);
            }
        }
        Ok(cols)
    }

    fn forward_one(
        &self,
        x: &Tensor,
        ctx: &mut ExecCtx,
    ) -> Result<(Tensor, Vec<Vec<f64>>)> {
        let Tensor::Chw { h, w, .. } = x else {
            return Err(Error::Dimension("conv layer expects a channel stack".into()));
        };
        let (oh, ow) = self.out_dims(*h, *w)?;
        let act_quant = ctx.act_quant;
        let cols_q = self.im2col_padded(x, act_quant.as_ref())?;
        let mut out = vec![0.0; self.c_out * oh * ow];
        let mut zs = Vec::with_capacity(cols_q.len());
        for (pos, col) in cols_q.iter().enumerate() {
            let z = ctx.mix_input(col)?;
            let mut y = match ctx.mode {
                Mode::Lookup => ctx.physical_matvec(&self.weights, col)?,
                _ => self.weights.matvec(&z, ctx.weight_quant.as_ref())?,
            };
            ctx.add_training_noise(&mut y)?;
            for o in 0..self.c_out {
                out[o * oh * ow + pos] = y[o] + self.bias[o];
            }
            zs.push(z);
        }
        Ok((Tensor::chw(self.c_out, oh, ow, out)?, zs))
    }

    #[allow(clippy::too_many_arguments)]
    fn backward_one(
        &self,
        delta: &Tensor,
        x_raw: &Tensor,
        zs: &[Vec<f64>],
        ctx: &ExecCtx,
        w_grads: &mut [f64],
        b_grads: &mut [f64],
    ) -> Result<Tensor> {
        let Tensor::Chw { c: dc, h: oh, w: ow, data: ddata } = delta else {
            return Err(Error::Dimension("conv backward expects a channel stack".into()));
        };
        let Tensor::Chw { c, h, w, data: xdata } = x_raw else {
            return Err(Error::Dimension("conv backward expects a channel stack".into()));
        };
        debug_assert_eq!(*dc, self.c_out);
        let k = self.k;
        let mut dx = vec![0.0; c * h * w];
        let mut raw_mask_grads = vec![0.0; c * h * w];
        for (pos, z) in zs.iter().enumerate() {
            let (y0, x0) = (pos / ow, pos % ow);
            let mut delta_col = vec![0.0; self.weights.rows];
            for o in 0..self.c_out {
                let d = ddata[o * oh * ow + pos];
                delta_col[o] = d;
                b_grads[o] += d;
            }
            self.weights.accumulate_grad(&delta_col, z, w_grads);
            let upstream = self.weights.matvec_t(&delta_col, ctx.weight_quant.as_ref())?;
            let dcol = ctx.unmix_gradient(&upstream)?;
            for ch in 0..*c {
                for ky in 0..k {
                    for kx in 0..k {
                        raw_mask_grads[(ch * h + y0 + ky) * w + x0 + kx] +=
                            dcol[patch_flat_index(ch, ky, kx, k)];
                    }
                }
            }
        }
        for (g, raw) in w_grads.iter_mut().zip(&self.weights.params) {
            *g *= ste_mask(*raw, ctx.weight_quant.as_ref());
        }
        for i in 0..dx.len() {
            dx[i] = raw_mask_grads[i] * ste_mask(xdata[i], ctx.act_quant.as_ref());
        }
        Tensor::chw(*c, *h, *w, dx)
    }
}

impl Layer {
    pub fn forward_batch(
        &self,
        batch: &[Tensor],
        ctx: &mut ExecCtx,
    ) -> Result<(Vec<Tensor>, LayerCache)> {
        match self {
            Layer::Linear(l) => {
                let mut outs = Vec::with_capacity(batch.len());
                let mut x_raw = Vec::with_capacity(batch.len());
                let mut zs = Vec::with_capacity(batch.len());
                for t in batch {
                    let (y, raw, z) = l.forward_one(t.data(), ctx)?;
                    outs.push(Tensor::Flat(y));
                    x_raw.push(raw);
                    zs.push(z);
                }
                Ok((outs, LayerCache::Mvm { x_raw, z: zs }))
            }
            Layer::Conv(cl) => {
                let mut outs = Vec::with_capacity(batch.len());
                let mut zs = Vec::with_capacity(batch.len());
                let mut dims = (0, 0);
                for t in batch {
                    let (y, z) = cl.forward_one(t, ctx)?;
                    if let Tensor::Chw { h, w, .. } = &y {
                        dims = (*h, *w);
                    }
                    outs.push(y);
                    zs.push(z);
                }
                Ok((
                    outs,
                    LayerCache::ConvMvm {
                        x_raw: batch.to_vec(),
                        z: zs,
                        out_h: dims.0,
                        out_w: dims.1,
                    },
                ))
            }
            Layer::Relu => {
                let mut outs = Vec::with_capacity(batch.len());
                let mut masks = Vec::with_capacity(batch.len());
                for t in batch {
                    let mask: Vec<bool> = t.data().iter().map(|&v| v > 0.0).collect();
                    let data = t.data().iter().map(|&v| v.max(0.0)).collect();
                    outs.push(t.same_shape_from(data)?);
                    masks.push(mask);
                }
                Ok((outs, LayerCache::Relu { mask: masks }))
            }
            Layer::MaxPool2 => {
                let mut outs = Vec::with_capacity(batch.len());
                let mut argmax = Vec::with_capacity(batch.len());
                let mut in_shape = (0, 0, 0);
                for t in batch {
                    let Tensor::Chw { c, h, w, data } = t else {
                        return Err(Error::Dimension("pooling expects a channel stack".into()));
                    };
                    in_shape = (*c, *h, *w);
                    let (oh, ow) = (h / 2, w / 2);
                    let mut out = vec![0.0; c * oh * ow];
                    let mut arg = vec![0usize; c * oh * ow];
                    for ch in 0..*c {
                        for y0 in 0..oh {
                            for x0 in 0..ow {
                                let mut best = f64::NEG_INFINITY;
                                let mut best_idx = 0;
                                for dy in 0..2 {
                                    for dx in 0..2 {
                                        let idx = (ch * h + 2 * y0 + dy) * w + 2 * x0 + dx;
                                        if data[idx] > best {
                                            best = data[idx];
                                            best_idx = idx;
                                        }
                                    }
                                }
                                out[(ch * oh + y0) * ow + x0] = best;
                                arg[(ch * oh + y0) * ow + x0] = best_idx;
                            }
                        }
                    }
                    outs.push(Tensor::chw(*c, oh, ow, out)?);
                    argmax.push(arg);
                }
                Ok((outs, LayerCache::MaxPool { argmax, in_shape }))
            }
            Layer::AvgPool2 => {
                let mut outs = Vec::with_capacity(batch.len());
                let mut in_shape = (0, 0, 0);
                for t in batch {
                    let Tensor::Chw { c, h, w, data } = t else {
                        return Err(Error::Dimension("pooling expects a channel stack".into()));
                    };
                    in_shape = (*c, *h, *w);
                    let (oh, ow) = (h / 2, w / 2);
                    let mut out = vec![0.0; c * oh * ow];
                    for ch in 0..*c {
                        for y0 in 0..oh {
                            for x0 in 0..ow {
                                let mut acc = 0.0;
                                for dy in 0..2 {
                                    for dx in 0..2 {
                                        acc += data[(ch * h + 2 * y0 + dy) * w + 2 * x0 + dx];
                                    }
                                }
                                out[(ch * oh + y0) * ow + x0] = acc / 4.0;
                            }
                        }
                    }
                    outs.push(Tensor::chw(*c, oh, ow, out)?);
                }
                Ok((outs, LayerCache::AvgPool { in_shape }))
            }
            Layer::BatchNorm(bn) => bn.forward_batch(batch, ctx),
            Layer::Flatten => {
                let mut outs = Vec::with_capacity(batch.len());
                let mut in_shape = (0, 0, 0);
                for t in batch {
                    let Tensor::Chw { c, h, w, data } = t else {
                        return Err(Error::Dimension("flatten expects a channel stack".into()));
                    };
                    in_shape = (*c, *h, *w);
                    outs.push(Tensor::Flat(data.clone()));
                }
                Ok((outs, LayerCache::Flatten { in_shape }))
            }
        }
    }

    pub fn backward_batch(
        &self,
        deltas: &[Tensor],
        cache: &LayerCache,
        ctx: &ExecCtx,
    ) -> Result<(Vec<Tensor>, ParamGrads)> {
        match (self, cache) {
            (Layer::Linear(l), LayerCache::Mvm { x_raw, z }) => {
                let mut w_grads = vec![0.0; l.weights.param_count()];
                let mut b_grads = vec![0.0; l.out_dim];
                let mut dxs = Vec::with_capacity(deltas.len());
                for ((delta, raw), zv) in deltas.iter().zip(x_raw).zip(z) {
                    let dx = l.backward_one(delta.data(), raw, zv, ctx, &mut w_grads, &mut b_grads)?;
                    dxs.push(Tensor::Flat(dx));
                }
                Ok((
                    dxs,
                    ParamGrads::WeightsBias {
                        weights: w_grads,
                        bias: b_grads,
                    },
                ))
            }
            (Layer::Conv(cl), LayerCache::ConvMvm { x_raw, z, .. }) => {
                let mut w_grads = vec![0.0; cl.weights.param_count()];
                let mut b_grads = vec![0.0; cl.c_out];
                let mut dxs = Vec::with_capacity(deltas.len());
                for ((delta, raw), zs) in deltas.iter().zip(x_raw).zip(z) {
                    dxs.push(cl.backward_one(delta, raw, zs, ctx, &mut w_grads, &mut b_grads)?);
                }
                Ok((
                    dxs,
                    ParamGrads::WeightsBias {
                        weights: w_grads,
                        bias: b_grads,
                    },
                ))
            }
            (Layer::Relu, LayerCache::Relu { mask }) => {
                let mut dxs = Vec::with_capacity(deltas.len());
                for (delta, m) in deltas.iter().zip(mask) {
                    let data = delta
                        .data()
                        .iter()
                        .zip(m)
                        .map(|(&d, &keep)| if keep { d } else { 0.0 })
                        .collect();
                    dxs.push(delta.same_shape_from(data)?);
                }
                Ok((dxs, ParamGrads::None))
            }
            (Layer::MaxPool2, LayerCache::MaxPool { argmax, in_shape }) => {
                let (c, h, w) = *in_shape;
                let mut dxs = Vec::with_capacity(deltas.len());
                for (delta, arg) in deltas.iter().zip(argmax) {
                    let mut dx = vec![0.0; c * h * w];
                    for (d, &idx) in delta.data().iter().zip(arg) {
                        dx[idx] += d;
                    }
                    dxs.push(Tensor::chw(c, h, w, dx)?);
                }
                Ok((dxs, ParamGrads::None))
            }
            (Layer::AvgPool2, LayerCache::AvgPool { in_shape }) => {
                let (c, h, w) = *in_shape;
                let (oh, ow) = (h / 2, w / 2);
                let mut dxs = Vec::with_capacity(deltas.len());
                for delta in deltas {
                    let mut dx = vec![0.0; c * h * w];
                    for ch in 0..c {
                        for y0 in 0..oh {
                            for x0 in 0..ow {
                                let d = delta.data()[(ch * oh + y0) * ow + x0] / 4.0;
                                for dy in 0..2 {
                                    for dxp in 0..2 {
                                        dx[(ch * h + 2 * y0 + dy) * w + 2 * x0 + dxp] += d;
                                    }
                                }
                            }
                        }
                    }
                    dxs.push(Tensor::chw(c, h, w, dx)?);
                }
                Ok((dxs, ParamGrads::None))
            }
            (Layer::BatchNorm(bn), LayerCache::BatchNorm { x_hat, inv_std, group_size }) => {
                bn.backward_batch(deltas, x_hat, inv_std, *group_size)
            }
            (Layer::Flatten, LayerCache::Flatten { in_shape }) => {
                let (c, h, w) = *in_shape;
                let mut dxs = Vec::with_capacity(deltas.len());
                for delta in deltas {
                    dxs.push(Tensor::chw(c, h, w, delta.data().to_vec())?);
                }
                Ok((dxs, ParamGrads::None))
            }
            _ => Err(Error::InvalidParameter("layer/cache mismatch".into())),
        }
    }

    /// Trainable parameter slices: (weights-like, bias-like).
    pub fn params_mut(&mut self) -> Option<(&mut [f64], &mut [f64])> {
        match self {
            Layer::Linear(l) => Some((&mut l.weights.params, &mut l.bias)),
            Layer::Conv(c) => Some((&mut c.weights.params, &mut c.bias)),
            Layer::BatchNorm(bn) => Some((&mut bn.gamma, &mut bn.beta)),
            _ => None,
        }
    }

    /// Stored weight scalars of MVM layers (excludes biases and BN).
    pub fn weight_scalars(&self) -> usize {
        match self {
            Layer::Linear(l) => l.weights.param_count(),
            Layer::Conv(c) => c.weights.param_count(),
            _ => 0,
        }
    }

    /// Dense-equivalent scalar count of MVM layers.
    pub fn dense_equivalent_scalars(&self) -> usize {
        match self {
            Layer::Linear(l) => l.weights.rows * l.weights.cols,
            Layer::Conv(c) => c.weights.rows * c.weights.cols,
            _ => 0,
        }
    }
}

impl BatchNormLayer {
    /// Feature count and group size for a tensor shape.
    fn grouping(&self, t: &Tensor) -> Result<(usize, usize)> {
        match t {
            Tensor::Chw { c, h, w, .. } => {
                if *c != self.features {
                    return Err(Error::Dimension(format!(
                        "batch norm over {} features got {c} channels",
                        self.features
                    )));
                }
                Ok((*c, h * w))
            }
            Tensor::Flat(d) => {
                if d.len() != self.features {
                    return Err(Error::Dimension(format!(
                        "batch norm over {} features got {}",
                        self.features,
                        d.len()
                    )));
                }
                Ok((d.len(), 1))
            }
        }
    }

    fn forward_batch(&self, batch: &[Tensor], ctx: &mut ExecCtx) -> Result<(Vec<Tensor>, LayerCache)> {
        let (features, group) = self.grouping(&batch[0])?;
        let count = (batch.len() * group) as f64;
        let (mean, var) = if ctx.training {
            let mut mean = vec![0.0; features];
            for t in batch {
                for f in 0..features {
                    for g in 0..group {
                        mean[f] += t.data()[f * group + g];
                    }
                }
            }
            for m in mean.iter_mut() {
                *m /= count;
            }
            let mut var = vec![0.0; features];
            for t in batch {
                for f in 0..features {
                    for g in 0..group {
                        let d = t.data()[f * group + g] - mean[f];
                        var[f] += d * d;
                    }
                }
            }
            for v in var.iter_mut() {
                *v /= count;
            }
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut outs = Vec::with_capacity(batch.len());
        let mut x_hat = Vec::with_capacity(batch.len());
        for t in batch {
            let mut hat = vec![0.0; t.len()];
            let mut out = vec![0.0; t.len()];
            for f in 0..features {
                for g in 0..group {
                    let idx = f * group + g;
                    let h = (t.data()[idx] - mean[f]) * inv_std[f];
                    hat[idx] = h;
                    out[idx] = self.gamma[f] * h + self.beta[f];
                }
            }
            outs.push(t.same_shape_from(out)?);
            x_hat.push(hat);
        }
        if ctx.training {
            ctx.bn_updates.push((mean, var));
        }
        Ok((
            outs,
            LayerCache::BatchNorm {
                x_hat,
                inv_std,
                group_size: group,
            },
        ))
    }

    fn backward_batch(
        &self,
        deltas: &[Tensor],
        x_hat: &[Vec<f64>],
        inv_std: &[f64],
        group: usize,
    ) -> Result<(Vec<Tensor>, ParamGrads)> {
        let features = self.features;
        let count = (deltas.len() * group) as f64;
        let mut dgamma = vec![0.0; features];
        let mut dbeta = vec![0.0; features];
        for (delta, hat) in deltas.iter().zip(x_hat) {
            for f in 0..features {
                for g in 0..group {
                    let idx = f * group + g;
                    dgamma[f] += delta.data()[idx] * hat[idx];
                    dbeta[f] += delta.data()[idx];
                }
            }
        }
        let mut dxs = Vec::with_capacity(deltas.len());
        for (delta, hat) in deltas.iter().zip(x_hat) {
            let mut dx = vec![0.0; delta.len()];
            for f in 0..features {
                let scale = self.gamma[f] * inv_std[f] / count;
                for g in 0..group {
                    let idx = f * group + g;
                    dx[idx] = scale
                        * (count * delta.data()[idx] - dbeta[f] - hat[idx] * dgamma[f]);
                }
            }
            dxs.push(delta.same_shape_from(dx)?);
        }
        Ok((
            dxs,
            ParamGrads::BatchNorm {
                gamma: dgamma,
                beta: dbeta,
            },
        ))
    }
}
