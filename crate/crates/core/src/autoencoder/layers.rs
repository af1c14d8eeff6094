//! Layer primitives for the patch autoencoder.
//!
//! Activations are batched, pixel-major matrices: shape `(n * h * w, c)`,
//! row `s * h * w + r * w + col`, one channel per column. Convolutions are
//! im2col + GEMM with offset-major patch columns (column `off * c_in + ci`
//! for kernel offset `off`), which keeps every copy in the im2col fill
//! contiguous over channels.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::gemm::matmul;

pub const KERNEL: usize = 5;
pub const PAD: usize = 2;

/// Batched im2col: `(n h w, c_in)` -> `(n h w, 25 c_in)`.
pub fn im2col(x: &ArrayView2<f64>, n: usize, h: usize, w: usize) -> Array2<f64> {
    let c_in = x.ncols();
    let hw = h * w;
    let mut cols = Array2::zeros((n * hw, KERNEL * KERNEL * c_in));
    let xs = x.as_standard_layout();
    let x_slice = xs.as_slice().unwrap();
    let cols_slice = cols.as_slice_mut().unwrap();
    let ncols = KERNEL * KERNEL * c_in;
    for kr in 0..KERNEL {
        let dr = kr as isize - PAD as isize;
        for kc in 0..KERNEL {
            let dc = kc as isize - PAD as isize;
            let off = (kr * KERNEL + kc) * c_in;
            // valid output column range for this kernel offset
            let c_lo = (-dc).max(0) as usize;
            let c_hi = (w as isize - dc).min(w as isize) as usize;
            if c_lo >= c_hi {
                continue;
            }
            for s in 0..n {
                for r in 0..h {
                    let rr = r as isize + dr;
                    if rr < 0 || rr >= h as isize {
                        continue;
                    }
                    let src_row = s * hw + rr as usize * w;
                    let dst_row = s * hw + r * w;
                    for c in c_lo..c_hi {
                        let src = (src_row + (c as isize + dc) as usize) * c_in;
                        let dst = (dst_row + c) * ncols + off;
                        cols_slice[dst..dst + c_in]
                            .copy_from_slice(&x_slice[src..src + c_in]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters column-space gradients back to pixels.
pub fn col2im(cols: &Array2<f64>, n: usize, h: usize, w: usize, c_in: usize) -> Array2<f64> {
    let hw = h * w;
    let mut x = Array2::zeros((n * hw, c_in));
    let x_slice = x.as_slice_mut().unwrap();
    let cols_slice = cols.as_slice().unwrap();
    let ncols = KERNEL * KERNEL * c_in;
    for kr in 0..KERNEL {
        let dr = kr as isize - PAD as isize;
        for kc in 0..KERNEL {
            let dc = kc as isize - PAD as isize;
            let off = (kr * KERNEL + kc) * c_in;
            let c_lo = (-dc).max(0) as usize;
            let c_hi = (w as isize - dc).min(w as isize) as usize;
            if c_lo >= c_hi {
                continue;
            }
            for s in 0..n {
                for r in 0..h {
                    let rr = r as isize + dr;
                    if rr < 0 || rr >= h as isize {
                        continue;
                    }
                    let src_row = s * hw + rr as usize * w;
                    let dst_row = s * hw + r * w;
                    for c in c_lo..c_hi {
                        let xi = (src_row + (c as isize + dc) as usize) * c_in;
                        let ci0 = (dst_row + c) * ncols + off;
                        for ci in 0..c_in {
                            x_slice[xi + ci] += cols_slice[ci0 + ci];
                        }
                    }
                }
            }
        }
    }
    x
}

/// GEMM + bias over a prebuilt column matrix.
pub fn conv_forward_cols(
    cols: &Array2<f64>,
    weights: ArrayView2<f64>, // (c_out, 25 c_in), offset-major columns
    bias: ArrayView1<f64>,
) -> Array2<f64> {
    let mut y = matmul(cols.view(), weights.t()); // (n h w, c_out)
    y += &bias;
    y
}

/// Same-padded 5x5 convolution: one GEMM per batch.
pub fn conv_forward(
    x: &ArrayView2<f64>,
    n: usize,
    h: usize,
    w: usize,
    weights: ArrayView2<f64>,
    bias: ArrayView1<f64>,
) -> Array2<f64> {
    conv_forward_cols(&im2col(x, n, h, w), weights, bias)
}

/// Gradients of the convolution given the forward column matrix. `dx` is
/// skipped when the input gradient is not needed (the first layer).
pub fn conv_backward_cols(
    dy: &ArrayView2<f64>,
    cols: &Array2<f64>,
    weights: ArrayView2<f64>,
    n: usize,
    h: usize,
    w: usize,
    need_dx: bool,
) -> (Array2<f64>, Array1<f64>, Option<Array2<f64>>) {
    let c_in = weights.ncols() / (KERNEL * KERNEL);
    let dw = matmul(dy.t(), cols.view()); // (c_out, 25 c_in)
    let db = dy.sum_axis(ndarray::Axis(0));
    let dx = if need_dx {
        let dcols = matmul(dy.view(), weights); // (n h w, 25 c_in)
        Some(col2im(&dcols, n, h, w, c_in))
    } else {
        None
    };
    (dw, db, dx)
}

/// Gradients of the convolution; rebuilds the column matrix from `x`.
pub fn conv_backward(
    dy: &ArrayView2<f64>,
    x: &ArrayView2<f64>,
    weights: ArrayView2<f64>,
    n: usize,
    h: usize,
    w: usize,
) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let cols = im2col(x, n, h, w);
    let (dw, db, dx) = conv_backward_cols(dy, &cols, weights, n, h, w, true);
    (dw, db, dx.unwrap())
}

/// The `(kr, kc, offset block, row displacement, valid column range)` walk
/// shared by the direct single-output-map kernels.
#[inline]
fn offsets(c_in: usize, w: usize) -> impl Iterator<Item = (isize, isize, usize, usize, usize)> {
    (0..KERNEL).flat_map(move |kr| {
        (0..KERNEL).map(move |kc| {
            let dr = kr as isize - PAD as isize;
            let dc = kc as isize - PAD as isize;
            let off = (kr * KERNEL + kc) * c_in;
            let c_lo = (-dc).max(0) as usize;
            let c_hi = ((w as isize - dc).min(w as isize)).max(0) as usize;
            (dr, dc, off, c_lo, c_hi)
        })
    })
}

/// Direct convolution for a single output map (`c_out == 1`): avoids
/// materializing the 25x column matrix entirely.
pub fn conv_forward_single(
    x: &ArrayView2<f64>,
    n: usize,
    h: usize,
    w: usize,
    weights: ArrayView2<f64>, // (1, 25 c_in)
    bias: f64,
) -> Array2<f64> {
    let c_in = x.ncols();
    let hw = h * w;
    let xs = x.as_standard_layout();
    let x_slice = xs.as_slice().unwrap();
    let w_slice = weights.as_slice().expect("weights are contiguous");
    let mut y = Array2::from_elem((n * hw, 1), bias);
    let y_slice = y.as_slice_mut().unwrap();
    for (dr, dc, off, c_lo, c_hi) in offsets(c_in, w) {
        if c_lo >= c_hi {
            continue;
        }
        let taps = &w_slice[off..off + c_in];
        for s in 0..n {
            for r in 0..h {
                let rr = r as isize + dr;
                if rr < 0 || rr >= h as isize {
                    continue;
                }
                let src_row = s * hw + rr as usize * w;
                let dst_row = s * hw + r * w;
                for c in c_lo..c_hi {
                    let src = (src_row + (c as isize + dc) as usize) * c_in;
                    let mut acc = 0.0;
                    for (xv, wv) in x_slice[src..src + c_in].iter().zip(taps) {
                        acc += xv * wv;
                    }
                    y_slice[dst_row + c] += acc;
                }
            }
        }
    }
    y
}

/// Gradients for the single-output-map convolution, fused (no column
/// matrices).
pub fn conv_backward_single(
    dy: &ArrayView2<f64>, // (n h w, 1)
    x: &ArrayView2<f64>,
    weights: ArrayView2<f64>,
    n: usize,
    h: usize,
    w: usize,
) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let c_in = x.ncols();
    let hw = h * w;
    let xs = x.as_standard_layout();
    let x_slice = xs.as_slice().unwrap();
    let w_slice = weights.as_slice().expect("weights are contiguous");
    let dys = dy.as_standard_layout();
    let dy_slice = dys.as_slice().unwrap();

    let mut dw = Array2::zeros((1, KERNEL * KERNEL * c_in));
    let dw_slice = dw.as_slice_mut().unwrap();
    let mut dx = Array2::zeros((n * hw, c_in));
    let dx_slice = dx.as_slice_mut().unwrap();
    let db = dy_slice.iter().sum::<f64>();

    for (dr, dc, off, c_lo, c_hi) in offsets(c_in, w) {
        if c_lo >= c_hi {
            continue;
        }
        for s in 0..n {
            for r in 0..h {
                let rr = r as isize + dr;
                if rr < 0 || rr >= h as isize {
                    continue;
                }
                let src_row = s * hw + rr as usize * w;
                let dst_row = s * hw + r * w;
                for c in c_lo..c_hi {
                    let g = dy_slice[dst_row + c];
                    let src = (src_row + (c as isize + dc) as usize) * c_in;
                    let dw_block = &mut dw_slice[off..off + c_in];
                    for (d, xv) in dw_block.iter_mut().zip(&x_slice[src..src + c_in]) {
                        *d += g * xv;
                    }
                    let dx_block = &mut dx_slice[src..src + c_in];
                    for (d, wv) in dx_block.iter_mut().zip(&w_slice[off..off + c_in]) {
                        *d += g * wv;
                    }
                }
            }
        }
    }
    (dw, ndarray::arr1(&[db]), dx)
}

/// 2x2 average pooling; `h`, `w` refer to the input grid.
pub fn avgpool_forward(x: &ArrayView2<f64>, n: usize, h: usize, w: usize) -> Array2<f64> {
    let c = x.ncols();
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Array2::zeros((n * oh * ow, c));
    for s in 0..n {
        for r in 0..oh {
            for col in 0..ow {
                let base = s * h * w + 2 * r * w + 2 * col;
                let mut out = y.row_mut(s * oh * ow + r * ow + col);
                for ci in 0..c {
                    out[ci] = 0.25
                        * (x[(base, ci)]
                            + x[(base + 1, ci)]
                            + x[(base + w, ci)]
                            + x[(base + w + 1, ci)]);
                }
            }
        }
    }
    y
}

pub fn avgpool_backward(dy: &ArrayView2<f64>, n: usize, h: usize, w: usize) -> Array2<f64> {
    let c = dy.ncols();
    let (oh, ow) = (h / 2, w / 2);
    let mut dx = Array2::zeros((n * h * w, c));
    for s in 0..n {
        for r in 0..oh {
            for col in 0..ow {
                let g = dy.row(s * oh * ow + r * ow + col);
                let base = s * h * w + 2 * r * w + 2 * col;
                for &target in &[base, base + 1, base + w, base + w + 1] {
                    let mut row = dx.row_mut(target);
                    for ci in 0..c {
                        row[ci] = 0.25 * g[ci];
                    }
                }
            }
        }
    }
    dx
}

/// Nearest-neighbor 2x upsampling; `h`, `w` refer to the input grid.
pub fn upsample_forward(x: &ArrayView2<f64>, n: usize, h: usize, w: usize) -> Array2<f64> {
    let c = x.ncols();
    let (oh, ow) = (h * 2, w * 2);
    let mut y = Array2::zeros((n * oh * ow, c));
    for s in 0..n {
        for r in 0..oh {
            for col in 0..ow {
                let src = x.row(s * h * w + (r / 2) * w + col / 2);
                let mut dst = y.row_mut(s * oh * ow + r * ow + col);
                dst.assign(&src);
            }
        }
    }
    y
}

pub fn upsample_backward(dy: &ArrayView2<f64>, n: usize, h: usize, w: usize) -> Array2<f64> {
    let c = dy.ncols();
    let (oh, ow) = (h * 2, w * 2);
    let mut dx = Array2::zeros((n * h * w, c));
    for s in 0..n {
        for r in 0..oh {
            for col in 0..ow {
                let g = dy.row(s * oh * ow + r * ow + col);
                let mut dst = dx.row_mut(s * h * w + (r / 2) * w + col / 2);
                for ci in 0..c {
                    dst[ci] += g[ci];
                }
            }
        }
    }
    dx
}

pub fn relu_forward(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// `pre` is the pre-activation input of the ReLU.
pub fn relu_backward(dy: &Array2<f64>, pre: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    dx.zip_mut_with(pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
    dx
}

/// Row-wise numerically-stable softmax, in place.
pub fn softmax_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Backward through a row-wise softmax: `ds = p * (dy - (dy . p))` per row.
pub fn softmax_rows_backward(dy: &Array2<f64>, probs: &Array2<f64>) -> Array2<f64> {
    let mut ds = Array2::zeros(dy.raw_dim());
    for ((dy_row, p_row), mut out) in dy
        .rows()
        .into_iter()
        .zip(probs.rows())
        .zip(ds.rows_mut())
    {
        let dot: f64 = dy_row.iter().zip(p_row.iter()).map(|(a, b)| a * b).sum();
        for ((o, &g), &p) in out.iter_mut().zip(dy_row.iter()).zip(p_row.iter()) {
            *o = p * (g - dot);
        }
    }
    ds
}
