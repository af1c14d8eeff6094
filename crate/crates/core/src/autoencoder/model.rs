//! The patch autoencoder: a two-conv encoder to a softmax bottleneck, and a
//! mirrored decoder.
//!
//! Encoder: conv 5x5 (c1) -> ReLU -> avgpool 2x2 -> conv 5x5 (c2) -> ReLU ->
//! avgpool 2x2 -> dense -> softmax bottleneck (size B).
//! Decoder: dense -> ReLU -> reshape (c2 maps) -> upsample 2x -> conv 5x5
//! (c1) -> ReLU -> upsample 2x -> conv 5x5 (1 map, linear).
//!
//! Parameters live in one flat `Vec<f64>` described by a segment table.
//! Convolution weights are `(c_out, 25 * c_in)` with offset-major columns;
//! the dense layers use the batched pixel-major flatten (pixel, then
//! channel). All math is f64, and whole sample batches flow through each
//! layer as one matrix.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    avgpool_backward, avgpool_forward, conv_backward_cols, conv_backward_single,
    conv_forward_cols, conv_forward_single, im2col, relu_backward, relu_forward, softmax_rows,
    softmax_rows_backward, upsample_backward, upsample_forward, KERNEL,
};
use crate::error::{Error, Result};

/// Network sizing. The topology is fixed; only the map counts and bottleneck
/// width vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeArchitecture {
    pub c1: usize,
    pub c2: usize,
    pub bottleneck: usize,
    pub patch_size: usize,
}

impl Default for AeArchitecture {
    fn default() -> Self {
        AeArchitecture {
            c1: 16,
            c2: 32,
            bottleneck: 64,
            patch_size: 32,
        }
    }
}

impl AeArchitecture {
    /// Tiny configuration for gradient verification.
    pub fn tiny() -> Self {
        AeArchitecture {
            c1: 2,
            c2: 2,
            bottleneck: 4,
            patch_size: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Err(Error::Config { field, reason });
        if self.c1 == 0 || self.c2 == 0 || self.bottleneck == 0 {
            return bad("architecture", "map counts and bottleneck must be >= 1".into());
        }
        if self.patch_size % 4 != 0 || self.patch_size < 8 {
            return bad(
                "patch_size",
                format!("must be a multiple of 4 and >= 8, got {}", self.patch_size),
            );
        }
        Ok(())
    }

    /// Encoder output spatial side (after two 2x pools).
    pub fn inner_side(&self) -> usize {
        self.patch_size / 4
    }

    /// Flattened dimension entering the bottleneck dense layer.
    pub fn inner_dim(&self) -> usize {
        self.c2 * self.inner_side() * self.inner_side()
    }

    pub fn input_dim(&self) -> usize {
        self.patch_size * self.patch_size
    }

    /// `(name, offset, rows, cols)` for every parameter tensor, in
    /// declaration (= serialization) order. Vectors have `cols == 1`.
    pub fn segments(&self) -> Vec<(&'static str, usize, usize, usize)> {
        let k2 = KERNEL * KERNEL;
        let inner = self.inner_dim();
        let mut segs = Vec::new();
        let mut offset = 0;
        let mut push = |name: &'static str, rows: usize, cols: usize, segs: &mut Vec<_>| {
            segs.push((name, offset, rows, cols));
            offset += rows * cols;
        };
        push("enc_conv1_w", self.c1, k2, &mut segs);
        push("enc_conv1_b", self.c1, 1, &mut segs);
        push("enc_conv2_w", self.c2, self.c1 * k2, &mut segs);
        push("enc_conv2_b", self.c2, 1, &mut segs);
        push("enc_dense_w", self.bottleneck, inner, &mut segs);
        push("enc_dense_b", self.bottleneck, 1, &mut segs);
        push("dec_dense_w", inner, self.bottleneck, &mut segs);
        push("dec_dense_b", inner, 1, &mut segs);
        push("dec_conv1_w", self.c1, self.c2 * k2, &mut segs);
        push("dec_conv1_b", self.c1, 1, &mut segs);
        push("dec_conv2_w", 1, self.c1 * k2, &mut segs);
        push("dec_conv2_b", 1, 1, &mut segs);
        segs
    }

    pub fn param_count(&self) -> usize {
        self.segments().iter().map(|(_, _, r, c)| r * c).sum()
    }
}

/// Borrowed views of every tensor in a flat parameter vector.
struct ParamViews<'a> {
    w1: ArrayView2<'a, f64>,
    b1: ArrayView1<'a, f64>,
    w2: ArrayView2<'a, f64>,
    b2: ArrayView1<'a, f64>,
    w_enc: ArrayView2<'a, f64>,
    b_enc: ArrayView1<'a, f64>,
    w_dec: ArrayView2<'a, f64>,
    b_dec: ArrayView1<'a, f64>,
    w3: ArrayView2<'a, f64>,
    b3: ArrayView1<'a, f64>,
    w4: ArrayView2<'a, f64>,
    b4: ArrayView1<'a, f64>,
}

fn views<'a>(arch: &AeArchitecture, data: &'a [f64]) -> ParamViews<'a> {
    let segs = arch.segments();
    let mat = |i: usize| {
        let (_, o, r, c) = segs[i];
        ArrayView2::from_shape((r, c), &data[o..o + r * c]).unwrap()
    };
    let vec = |i: usize| {
        let (_, o, r, _) = segs[i];
        ArrayView1::from_shape(r, &data[o..o + r]).unwrap()
    };
    ParamViews {
        w1: mat(0),
        b1: vec(1),
        w2: mat(2),
        b2: vec(3),
        w_enc: mat(4),
        b_enc: vec(5),
        w_dec: mat(6),
        b_dec: vec(7),
        w3: mat(8),
        b3: vec(9),
        w4: mat(10),
        b4: vec(11),
    }
}

/// A parameterized autoencoder plus its training log.
#[derive(Debug, Clone, PartialEq)]
pub struct AeModel {
    pub arch: AeArchitecture,
    /// Flat parameter vector, laid out per [`AeArchitecture::segments`].
    pub params: Vec<f64>,
    /// Mean loss per epoch from the most recent training.
    pub train_log: Vec<f64>,
}

/// Result of a forward pass on one patch.
#[derive(Debug, Clone)]
pub struct AeOutput {
    /// Softmax bottleneck: non-negative, sums to 1.
    pub bottleneck: Vec<f64>,
    /// Reconstruction (row-major, `patch_size^2` values).
    pub reconstruction: Vec<f64>,
}

/// Batched forward intermediates kept for backprop. The im2col matrices of
/// the three GEMM convolutions are cached so the backward pass never
/// rebuilds them.
pub(super) struct BatchState {
    pub n: usize,
    pub x: Array2<f64>,
    pub cols1: Array2<f64>,
    pub pre1: Array2<f64>,
    pub p1: Array2<f64>,
    pub cols2: Array2<f64>,
    pub pre2: Array2<f64>,
    pub z: Array2<f64>,
    pub code: Array2<f64>,
    pub dec_pre: Array2<f64>,
    pub u1: Array2<f64>,
    pub cols3: Array2<f64>,
    pub pre3: Array2<f64>,
    pub u2: Array2<f64>,
    pub y: Array2<f64>,
}

impl AeModel {
    /// He-style initialization for all weights, zero biases.
    pub fn init(arch: AeArchitecture, seed: u64) -> Result<AeModel> {
        arch.validate()?;
        let mut params = vec![0.0; arch.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, offset, rows, cols) in arch.segments() {
            if name.ends_with("_b") {
                continue;
            }
            let std = (2.0 / cols as f64).sqrt();
            for v in params[offset..offset + rows * cols].iter_mut() {
                *v = std * standard_normal(&mut rng);
            }
        }
        Ok(AeModel {
            arch,
            params,
            train_log: Vec::new(),
        })
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("autoencoder parameters"));
        }
        Ok(())
    }

    /// Packs a batch of patches into the pixel-major batch matrix.
    fn pack(&self, batch: &[&[f64]]) -> Result<Array2<f64>> {
        let dim = self.arch.input_dim();
        let mut x = Array2::zeros((batch.len() * dim, 1));
        for (s, patch) in batch.iter().enumerate() {
            if patch.len() != dim {
                return Err(Error::Dimension {
                    what: "autoencoder input",
                    expected: dim,
                    got: patch.len(),
                });
            }
            for (i, &v) in patch.iter().enumerate() {
                x[(s * dim + i, 0)] = v;
            }
        }
        Ok(x)
    }

    /// Full batched forward pass.
    pub(super) fn forward_batch(&self, batch: &[&[f64]]) -> Result<BatchState> {
        if batch.is_empty() {
            return Err(Error::InsufficientData("empty batch".into()));
        }
        let a = &self.arch;
        let p = views(a, &self.params);
        let n = batch.len();
        let (s0, s1) = (a.patch_size, a.patch_size / 2);
        let x = self.pack(batch)?;

        let cols1 = im2col(&x.view(), n, s0, s0);
        let pre1 = conv_forward_cols(&cols1, p.w1, p.b1);
        let a1 = relu_forward(&pre1);
        let p1 = avgpool_forward(&a1.view(), n, s0, s0);
        let cols2 = im2col(&p1.view(), n, s1, s1);
        let pre2 = conv_forward_cols(&cols2, p.w2, p.b2);
        let a2 = relu_forward(&pre2);
        let pooled = avgpool_forward(&a2.view(), n, s1, s1);
        // (n s2^2, c2) rows are sample-contiguous: reshape is free
        let inner = a.inner_dim();
        let z = into_rows(pooled, n, inner);
        let mut code = crate::gemm::matmul(z.view(), p.w_enc.t());
        code += &p.b_enc;
        softmax_rows(&mut code);

        let (dec_pre, u1, cols3, pre3, u2, y) = self.decode_batch(&code, &p, n);
        Ok(BatchState {
            n,
            x,
            cols1,
            pre1,
            p1,
            cols2,
            pre2,
            z,
            code,
            dec_pre,
            u1,
            cols3,
            pre3,
            u2,
            y,
        })
    }

    /// Decoder on a batch of bottleneck rows.
    #[allow(clippy::type_complexity)]
    fn decode_batch(
        &self,
        code: &Array2<f64>,
        p: &ParamViews,
        n: usize,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
        let a = &self.arch;
        let (s0, s1, s2) = (a.patch_size, a.patch_size / 2, a.inner_side());
        let mut dec_pre = crate::gemm::matmul(code.view(), p.w_dec.t());
        dec_pre += &p.b_dec;
        let d = relu_forward(&dec_pre);
        let d_grid = into_rows(d, n * s2 * s2, a.c2);
        let u1 = upsample_forward(&d_grid.view(), n, s2, s2);
        let cols3 = im2col(&u1.view(), n, s1, s1);
        let pre3 = conv_forward_cols(&cols3, p.w3, p.b3);
        let a3 = relu_forward(&pre3);
        let u2 = upsample_forward(&a3.view(), n, s1, s1);
        // the final conv has one output map: use the fused direct kernel
        let y = conv_forward_single(&u2.view(), n, s0, s0, p.w4, p.b4[0]);
        (dec_pre, u1, cols3, pre3, u2, y)
    }

    /// Encoder + decoder on one standardized patch.
    pub fn forward(&self, patch: &[f64]) -> Result<AeOutput> {
        let state = self.forward_batch(&[patch])?;
        Ok(AeOutput {
            bottleneck: state.code.row(0).to_vec(),
            reconstruction: state.y.column(0).to_vec(),
        })
    }

    /// Decodes a raw bottleneck vector (decoder only).
    pub fn decode(&self, code: &[f64]) -> Result<Vec<f64>> {
        if code.len() != self.arch.bottleneck {
            return Err(Error::Dimension {
                what: "bottleneck vector",
                expected: self.arch.bottleneck,
                got: code.len(),
            });
        }
        let p = views(&self.arch, &self.params);
        let code_mat = Array2::from_shape_vec((1, code.len()), code.to_vec()).unwrap();
        let (_, _, _, _, _, y) = self.decode_batch(&code_mat, &p, 1);
        Ok(y.column(0).to_vec())
    }

    /// Decodes the one-hot bottleneck vector `e_j` (a "cluster probe").
    pub fn probe_cluster(&self, j: usize) -> Result<Vec<f64>> {
        if j >= self.arch.bottleneck {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: self.arch.bottleneck,
            });
        }
        let mut code = vec![0.0; self.arch.bottleneck];
        code[j] = 1.0;
        self.decode(&code)
    }

    /// Loss (sum of per-patch MSE) of a batch plus its gradient scaled by
    /// `weight`, accumulated into `grad`.
    pub(super) fn backward_batch(
        &self,
        batch: &[&[f64]],
        weight: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        let a = &self.arch;
        let state = self.forward_batch(batch)?;
        let p = views(a, &self.params);
        let segs = a.segments();
        let n = state.n;
        let (s0, s1, s2) = (a.patch_size, a.patch_size / 2, a.inner_side());
        let pix = a.input_dim() as f64;

        let mut loss_sum = 0.0;
        let mut dy = Array2::zeros(state.y.raw_dim());
        for (r, (y, x)) in state.y.iter().zip(state.x.iter()).enumerate() {
            let diff = y - x;
            loss_sum += diff * diff;
            dy[(r, 0)] = weight * 2.0 * diff / pix;
        }
        let loss_sum = loss_sum / pix;

        // decoder
        let (dw4, db4, du2) =
            conv_backward_single(&dy.view(), &state.u2.view(), p.w4, n, s0, s0);
        let da3 = upsample_backward(&du2.view(), n, s1, s1);
        let dpre3 = relu_backward(&da3, &state.pre3);
        let (dw3, db3, du1) =
            conv_backward_cols(&dpre3.view(), &state.cols3, p.w3, n, s1, s1, true);
        let du1 = du1.expect("dx requested");
        let dd_grid = upsample_backward(&du1.view(), n, s2, s2);
        let dd = into_rows(dd_grid, n, a.inner_dim());
        let ddec_pre = relu_backward(&dd, &state.dec_pre);
        let dw_dec = crate::gemm::matmul(ddec_pre.t(), state.code.view());
        let db_dec = ddec_pre.sum_axis(Axis(0));
        let dcode = crate::gemm::matmul(ddec_pre.view(), p.w_dec);

        // bottleneck
        let dlogits = softmax_rows_backward(&dcode, &state.code);
        let dw_enc = crate::gemm::matmul(dlogits.t(), state.z.view());
        let db_enc = dlogits.sum_axis(Axis(0));
        let dz = crate::gemm::matmul(dlogits.view(), p.w_enc);

        // encoder
        let dz_grid = into_rows(dz, n * s2 * s2, a.c2);
        let da2 = avgpool_backward(&dz_grid.view(), n, s1, s1);
        let dpre2 = relu_backward(&da2, &state.pre2);
        let (dw2, db2, dp1) =
            conv_backward_cols(&dpre2.view(), &state.cols2, p.w2, n, s1, s1, true);
        let dp1 = dp1.expect("dx requested");
        let da1 = avgpool_backward(&dp1.view(), n, s0, s0);
        let dpre1 = relu_backward(&da1, &state.pre1);
        // the input gradient of the first layer is never used
        let (dw1, db1, _) =
            conv_backward_cols(&dpre1.view(), &state.cols1, p.w1, n, s0, s0, false);

        let add = |grad: &mut [f64], seg: usize, values: &mut dyn Iterator<Item = f64>| {
            let (_, o, r, c) = segs[seg];
            for (g, v) in grad[o..o + r * c].iter_mut().zip(values) {
                *g += v;
            }
        };
        add(grad, 0, &mut dw1.iter().copied());
        add(grad, 1, &mut db1.iter().copied());
        add(grad, 2, &mut dw2.iter().copied());
        add(grad, 3, &mut db2.iter().copied());
        add(grad, 4, &mut dw_enc.iter().copied());
        add(grad, 5, &mut db_enc.iter().copied());
        add(grad, 6, &mut dw_dec.iter().copied());
        add(grad, 7, &mut db_dec.iter().copied());
        add(grad, 8, &mut dw3.iter().copied());
        add(grad, 9, &mut db3.iter().copied());
        add(grad, 10, &mut dw4.iter().copied());
        add(grad, 11, &mut db4.iter().copied());
        Ok(loss_sum)
    }
}

/// Reshapes an owned standard-layout matrix to new row/col counts.
fn into_rows(m: Array2<f64>, rows: usize, cols: usize) -> Array2<f64> {
    debug_assert_eq!(m.len(), rows * cols);
    let (vec, _) = m.into_raw_vec_and_offset();
    Array2::from_shape_vec((rows, cols), vec).expect("same element count")
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

impl crate::features::PatchEncoder for AeModel {
    fn dim(&self) -> usize {
        self.arch.bottleneck
    }

    /// Soft assignment: the softmax bottleneck.
    fn encode(&self, patch: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(patch)?.bottleneck)
    }
}

/// Hard-assignment wrapper: a one-hot at the bottleneck argmax.
pub struct HardAeEncoder<'a>(pub &'a AeModel);

impl crate::features::PatchEncoder for HardAeEncoder<'_> {
    fn dim(&self) -> usize {
        self.0.arch.bottleneck
    }

    fn encode(&self, patch: &[f64]) -> Result<Vec<f64>> {
        let code = self.0.forward(patch)?.bottleneck;
        let mut best = 0;
        for (i, v) in code.iter().enumerate() {
            if *v > code[best] {
                best = i;
            }
        }
        let mut out = vec![0.0; code.len()];
        out[best] = 1.0;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_patch(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()
    }

    #[test]
    fn bottleneck_lies_on_the_simplex() {
        let model = AeModel::init(AeArchitecture::tiny(), 3).unwrap();
        for seed in 0..5 {
            let out = model.forward(&random_patch(seed, 1024)).unwrap();
            let sum: f64 = out.bottleneck.iter().sum();
            assert_relative_eq!(sum, 1.0, epsilon = 1e-9);
            assert!(out.bottleneck.iter().all(|&v| v >= 0.0));
            assert!(out.reconstruction.iter().all(|v| v.is_finite()));
            assert_eq!(out.reconstruction.len(), 1024);
        }
    }

    #[test]
    fn batched_forward_matches_single_forward() {
        let model = AeModel::init(AeArchitecture::tiny(), 10).unwrap();
        let patches: Vec<Vec<f64>> = (0..4).map(|s| random_patch(s, 1024)).collect();
        let refs: Vec<&[f64]> = patches.iter().map(|p| p.as_slice()).collect();
        let state = model.forward_batch(&refs).unwrap();
        for (s, patch) in patches.iter().enumerate() {
            let single = model.forward(patch).unwrap();
            for (a, b) in single.bottleneck.iter().zip(state.code.row(s).iter()) {
                assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-300);
            }
            for (i, a) in single.reconstruction.iter().enumerate() {
                assert_relative_eq!(a, &state.y[(s * 1024 + i, 0)], max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn zeroed_encoder_head_gives_uniform_bottleneck() {
        let mut model = AeModel::init(AeArchitecture::tiny(), 4).unwrap();
        let segs = model.arch.segments();
        for (name, o, r, c) in &segs {
            if *name == "enc_dense_w" || *name == "enc_dense_b" {
                for v in model.params[*o..*o + r * c].iter_mut() {
                    *v = 0.0;
                }
            }
        }
        let out = model.forward(&random_patch(9, 1024)).unwrap();
        for v in &out.bottleneck {
            assert_relative_eq!(*v, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_is_bit_stable() {
        let model = AeModel::init(AeArchitecture::tiny(), 5).unwrap();
        let patch = random_patch(1, 1024);
        let a = model.forward(&patch).unwrap();
        let b = model.forward(&patch).unwrap();
        assert_eq!(a.bottleneck, b.bottleneck);
        assert_eq!(a.reconstruction, b.reconstruction);
    }

    #[test]
    fn probe_cluster_bounds_and_zero_decoder_constant() {
        let model = AeModel::init(AeArchitecture::tiny(), 6).unwrap();
        assert!(model.probe_cluster(4).is_err());
        let g0 = model.probe_cluster(0).unwrap();
        let g1 = model.probe_cluster(1).unwrap();
        let dist: f64 = g0.iter().zip(&g1).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!(dist > 0.0, "distinct probes should decode differently");

        // zero decoder weights: output equals the bias-propagated constant
        // field, identical for every j
        let mut zeroed = model.clone();
        let segs = zeroed.arch.segments();
        for (name, o, r, c) in &segs {
            if name.starts_with("dec_") && name.ends_with("_w") {
                for v in zeroed.params[*o..*o + r * c].iter_mut() {
                    *v = 0.0;
                }
            }
        }
        let p0 = zeroed.probe_cluster(0).unwrap();
        let p1 = zeroed.probe_cluster(3).unwrap();
        assert_eq!(p0, p1);
    }

    #[test]
    fn wrong_input_size_is_rejected() {
        let model = AeModel::init(AeArchitecture::tiny(), 7).unwrap();
        assert!(matches!(
            model.forward(&[0.0; 100]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn param_count_matches_layout() {
        let arch = AeArchitecture::tiny();
        let segs = arch.segments();
        // w1 2x25, b1 2, w2 2x50, b2 2, enc 4x128(+4), dec 128x4(+128),
        // w3 2x50, b3 2, w4 1x50, b4 1
        assert_eq!(
            arch.param_count(),
            50 + 2 + 100 + 2 + 512 + 4 + 512 + 128 + 100 + 2 + 50 + 1
        );
        let (_, last_off, r, c) = segs.last().unwrap();
        assert_eq!(last_off + r * c, arch.param_count());
    }
}
