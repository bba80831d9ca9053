//! Forward and backward kernels for the six layer kinds.
//!
//! Activations are batch-major: `[batch, features]` for dense layers and
//! `[batch, channels, height, width]` for spatial ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};

pub fn relu_forward(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Gradient of relu given the layer *input*. The subgradient at 0 is 0.
pub fn relu_backward(dy: &Tensor, x: &Tensor) -> Result<Tensor> {
    same_shape(dy, x, "relu backward")?;
    let data = dy
        .data()
        .iter()
        .zip(x.data())
        .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Ok(Tensor::from_parts(x.shape().to_vec(), data))
}

/// `y = x W + b`, with `b` broadcast over the batch.
pub fn affine_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (batch, inp, out) = affine_dims(x, w, b)?;
    let mut y = vec![0.0; batch * out];
    for row in y.chunks_exact_mut(out) {
        row.copy_from_slice(b.data());
    }
    gemm(batch, inp, out, x.data(), false, w.data(), false, &mut y, 1.0);
    Ok(Tensor::from_parts(vec![batch, out], y))
}

/// Returns `(dx, dW, db)`.
pub fn affine_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let batch = x.batch();
    let inp = x.row_len();
    if w.shape() != [inp, dy.row_len()] || dy.batch() != batch {
        return Err(Error::Dimension(format!(
            "affine backward: x {:?}, W {:?}, dy {:?}",
            x.shape(),
            w.shape(),
            dy.shape()
        )));
    }
    let out = dy.row_len();
    let mut dw = vec![0.0; inp * out];
    gemm(inp, batch, out, x.data(), true, dy.data(), false, &mut dw, 0.0);
    let mut db = vec![0.0; out];
    for row in dy.data().chunks_exact(out) {
        for (acc, g) in db.iter_mut().zip(row) {
            *acc += g;
        }
    }
    let mut dx = vec![0.0; batch * inp];
    gemm(batch, out, inp, dy.data(), false, w.data(), true, &mut dx, 0.0);
    Ok((
        Tensor::from_parts(x.shape().to_vec(), dx),
        Tensor::from_parts(vec![inp, out], dw),
        Tensor::from_parts(vec![out], db),
    ))
}

fn affine_dims(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    if x.ndim() < 2 {
        return Err(Error::Dimension(format!(
            "affine input must be [batch, in], got {:?}",
            x.shape()
        )));
    }
    let (batch, inp) = (x.batch(), x.row_len());
    if w.ndim() != 2 || w.shape()[0] != inp {
        return Err(Error::Dimension(format!(
            "affine: x axis 1 has {} units but W axis 0 has shape {:?}",
            inp,
            w.shape()
        )));
    }
    let out = w.shape()[1];
    if b.shape() != [out] {
        return Err(Error::Dimension(format!(
            "affine: W axis 1 has {} units but b has shape {:?}",
            out,
            b.shape()
        )));
    }
    Ok((batch, inp, out))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Valid,
    /// Zero padding so the output keeps the input's spatial size.
    Same,
}

/// Spatial geometry of one convolution.
#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    pad_top: usize,
    pad_left: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn new(x_shape: &[usize], k_shape: &[usize], padding: Padding) -> Result<Self> {
        if x_shape.len() != 4 || k_shape.len() != 4 {
            return Err(Error::Dimension(format!(
                "conv2d expects 4-d input and kernel, got {x_shape:?} and {k_shape:?}"
            )));
        }
        let (c_in, h, w) = (x_shape[1], x_shape[2], x_shape[3]);
        let (c_out, kc, kh, kw) = (k_shape[0], k_shape[1], k_shape[2], k_shape[3]);
        if kc != c_in {
            return Err(Error::Dimension(format!(
                "conv2d: input axis 1 has {c_in} channels, kernel axis 1 has {kc}"
            )));
        }
        let (pad_h, pad_w) = match padding {
            Padding::Valid => (0, 0),
            Padding::Same => (kh - 1, kw - 1),
        };
        if kh > h + pad_h || kw > w + pad_w {
            return Err(Error::Dimension(format!(
                "conv2d: kernel {kh}x{kw} larger than padded input {}x{}",
                h + pad_h,
                w + pad_w
            )));
        }
        Ok(Self {
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            pad_top: pad_h / 2,
            pad_left: pad_w / 2,
            oh: h + pad_h - kh + 1,
            ow: w + pad_w - kw + 1,
        })
    }

    fn patch(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn out_area(&self) -> usize {
        self.oh * self.ow
    }

    /// Unfolds one sample `[c_in, h, w]` into `[c_in*kh*kw, oh*ow]`.
    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let area = self.out_area();
        for ci in 0..self.c_in {
            let plane = &x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let r = (ci * self.kh + ki) * self.kw + kj;
                    let row = &mut cols[r * area..(r + 1) * area];
                    for oy in 0..self.oh {
                        let iy = (oy + ki) as isize - self.pad_top as isize;
                        let dst = &mut row[oy * self.ow..(oy + 1) * self.ow];
                        if iy < 0 || iy >= self.h as isize {
                            dst.fill(0.0);
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        // Output columns ox with 0 <= ox + kj - pad_left < w.
                        let lo = self.pad_left.saturating_sub(kj).min(self.ow);
                        let hi = (self.w + self.pad_left).saturating_sub(kj).clamp(lo, self.ow);
                        dst[..lo].fill(0.0);
                        dst[hi..].fill(0.0);
                        let start = lo + kj - self.pad_left;
                        dst[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                    }
                }
            }
        }
    }

    /// Adjoint of `im2col`: accumulates columns back into `[c_in, h, w]`.
    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let area = self.out_area();
        for ci in 0..self.c_in {
            let plane = &mut dx[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let r = (ci * self.kh + ki) * self.kw + kj;
                    let row = &cols[r * area..(r + 1) * area];
                    for oy in 0..self.oh {
                        let iy = (oy + ki) as isize - self.pad_top as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let base = iy as usize * self.w;
                        for ox in 0..self.ow {
                            let ix = (ox + kj) as isize - self.pad_left as isize;
                            if ix >= 0 && ix < self.w as isize {
                                plane[base + ix as usize] += row[oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Stride-1 cross-correlation (no kernel flip).
pub fn conv2d_forward(x: &Tensor, k: &Tensor, b: &Tensor, padding: Padding) -> Result<Tensor> {
    let g = ConvGeom::new(x.shape(), k.shape(), padding)?;
    if b.shape() != [g.c_out] {
        return Err(Error::Dimension(format!(
            "conv2d: kernel axis 0 has {} filters, bias has shape {:?}",
            g.c_out,
            b.shape()
        )));
    }
    let batch = x.batch();
    let (patch, area) = (g.patch(), g.out_area());
    let in_len = g.c_in * g.h * g.w;
    let out_len = g.c_out * area;
    let mut cols = vec![0.0; patch * area];
    let mut y = vec![0.0; batch * out_len];
    for s in 0..batch {
        g.im2col(&x.data()[s * in_len..(s + 1) * in_len], &mut cols);
        let ys = &mut y[s * out_len..(s + 1) * out_len];
        for (co, plane) in ys.chunks_exact_mut(area).enumerate() {
            plane.fill(b.data()[co]);
        }
        gemm(g.c_out, patch, area, k.data(), false, &cols, false, ys, 1.0);
    }
    Ok(Tensor::from_parts(vec![batch, g.c_out, g.oh, g.ow], y))
}

/// Returns `(dx, dK, db)`.
pub fn conv2d_backward(
    x: &Tensor,
    k: &Tensor,
    dy: &Tensor,
    padding: Padding,
) -> Result<(Tensor, Tensor, Tensor)> {
    let g = ConvGeom::new(x.shape(), k.shape(), padding)?;
    let batch = x.batch();
    if dy.shape() != [batch, g.c_out, g.oh, g.ow] {
        return Err(Error::Dimension(format!(
            "conv2d backward: dy {:?} does not match output [{batch}, {}, {}, {}]",
            dy.shape(),
            g.c_out,
            g.oh,
            g.ow
        )));
    }
    let (patch, area) = (g.patch(), g.out_area());
    let in_len = g.c_in * g.h * g.w;
    let out_len = g.c_out * area;
    let mut cols = vec![0.0; patch * area];
    let mut dcols = vec![0.0; patch * area];
    let mut dk = vec![0.0; k.len()];
    let mut db = vec![0.0; g.c_out];
    let mut dx = vec![0.0; x.len()];
    for s in 0..batch {
        let dys = &dy.data()[s * out_len..(s + 1) * out_len];
        g.im2col(&x.data()[s * in_len..(s + 1) * in_len], &mut cols);
        gemm(g.c_out, area, patch, dys, false, &cols, true, &mut dk, 1.0);
        for (co, plane) in dys.chunks_exact(area).enumerate() {
            db[co] += plane.iter().sum::<f64>();
        }
        gemm(patch, g.c_out, area, k.data(), true, dys, false, &mut dcols, 0.0);
        g.col2im(&dcols, &mut dx[s * in_len..(s + 1) * in_len]);
    }
    Ok((
        Tensor::from_parts(x.shape().to_vec(), dx),
        Tensor::from_parts(k.shape().to_vec(), dk),
        Tensor::from_parts(vec![g.c_out], db),
    ))
}

/// Output of a 2x2 max-pool: pooled values plus, for each output cell, the
/// flat index into the input that produced it.
#[derive(Clone, Debug)]
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

/// 2x2 max-pool with stride 2. Odd spatial sizes are padded with
/// `f64::MIN`; ties resolve to the first position in row-major window order.
pub fn maxpool2x2_forward(x: &Tensor) -> Result<Pooled> {
    if x.ndim() != 4 {
        return Err(Error::Dimension(format!(
            "maxpool expects [batch, c, h, w], got {:?}",
            x.shape()
        )));
    }
    let (batch, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Vec::with_capacity(batch * c * oh * ow);
    let mut argmax = Vec::with_capacity(batch * c * oh * ow);
    let data = x.data();
    for plane in 0..batch * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                // The top-left cell is always inside the input; padded cells
                // hold f64::MIN and can never win a strict comparison.
                let mut best_idx = base + 2 * oy * w + 2 * ox;
                let mut best = data[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let (iy, ix) = (2 * oy + dy, 2 * ox + dx);
                    if iy < h && ix < w {
                        let idx = base + iy * w + ix;
                        if data[idx] > best {
                            best = data[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    Ok(Pooled {
        output: Tensor::from_parts(vec![batch, c, oh, ow], out),
        argmax,
    })
}

/// Routes each output gradient to the input cell recorded in `argmax`.
pub fn maxpool2x2_backward(dy: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor> {
    if dy.len() != argmax.len() {
        return Err(Error::Dimension(format!(
            "maxpool backward: dy has {} cells, {} indices recorded",
            dy.len(),
            argmax.len()
        )));
    }
    let mut dx = vec![0.0; input_shape.iter().product()];
    for (&g, &idx) in dy.data().iter().zip(argmax) {
        dx[idx] += g;
    }
    Ok(Tensor::from_parts(input_shape.to_vec(), dx))
}

/// Row-wise softmax of `[batch, K]` logits, stabilized by max-subtraction.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    if logits.ndim() != 2 {
        return Err(Error::Dimension(format!(
            "softmax expects [batch, K], got {:?}",
            logits.shape()
        )));
    }
    let k = logits.shape()[1];
    let mut probs = logits.data().to_vec();
    for row in probs.chunks_exact_mut(k) {
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
    Ok(Tensor::from_parts(logits.shape().to_vec(), probs))
}

/// Mean cross-entropy of `softmax(logits)` against integer labels, and its
/// gradient `(softmax - onehot) / batch`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.ndim() != 2 || logits.batch() != labels.len() {
        return Err(Error::Dimension(format!(
            "cross-entropy: logits {:?} vs {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    let (batch, k) = (logits.shape()[0], logits.shape()[1]);
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Input(format!("label {bad} outside [0, {k})")));
    }
    let mut grad = vec![0.0; batch * k];
    let mut loss = 0.0;
    for (s, (row, &label)) in logits.data().chunks_exact(k).zip(labels).enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_sum = sum.ln();
        loss += log_sum - (row[label] - max);
        let g = &mut grad[s * k..(s + 1) * k];
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - max).exp() / sum / batch as f64;
        }
        g[label] -= 1.0 / batch as f64;
    }
    Ok((loss / batch as f64, Tensor::from_parts(vec![batch, k], grad)))
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn relu_examples() {
        assert_eq!(relu_forward(&t(&[3], &[-1.0, 2.0, 0.0])).data(), &[0.0, 2.0, 0.0]);
        assert_eq!(relu_forward(&Tensor::zeros(&[2, 3])), Tensor::zeros(&[2, 3]));
    }

    proptest! {
        #[test]
        fn relu_output_is_zero_or_input(xs in prop::collection::vec(-10.0f64..10.0, 1..64)) {
            let x = t(&[xs.len()], &xs);
            let y = relu_forward(&x);
            for (yi, xi) in y.data().iter().zip(&xs) {
                prop_assert!(*yi == 0.0 || yi == xi);
                prop_assert!(*yi >= 0.0);
            }
        }
    }

    #[test]
    fn affine_examples() {
        let eye = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let y = affine_forward(&t(&[1, 2], &[1.0, 0.0]), &eye, &t(&[2], &[0.0, 0.0])).unwrap();
        assert_eq!(y.data(), &[1.0, 0.0]);

        let w = t(&[2, 2], &[1.0, 1.0, 1.0, -1.0]);
        let y = affine_forward(&t(&[1, 2], &[1.0, 2.0]), &w, &t(&[2], &[1.0, 0.0])).unwrap();
        assert_eq!(y.data(), &[4.0, -1.0]);

        let y = affine_forward(&Tensor::zeros(&[3, 2]), &w, &t(&[2], &[0.5, -2.0])).unwrap();
        assert_eq!(y.data(), &[0.5, -2.0, 0.5, -2.0, 0.5, -2.0]);
    }

    #[test]
    fn affine_shape_errors_name_axes() {
        let err = affine_forward(&Tensor::zeros(&[1, 3]), &Tensor::zeros(&[2, 2]), &Tensor::zeros(&[2]))
            .unwrap_err();
        assert!(matches!(err, Error::Dimension(ref m) if m.contains("axis 1") && m.contains("axis 0")));
        let err = affine_forward(&Tensor::zeros(&[1, 2]), &Tensor::zeros(&[2, 2]), &Tensor::zeros(&[3]))
            .unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn single_sample_affine_gradient_is_outer_product() {
        let x = t(&[1, 3], &[1.0, -2.0, 0.5]);
        let w = Tensor::zeros(&[3, 2]);
        let dy = t(&[1, 2], &[0.25, -1.0]);
        let (_, dw, db) = affine_backward(&x, &w, &dy).unwrap();
        let expected: Vec<f64> = x
            .data()
            .iter()
            .flat_map(|xi| dy.data().iter().map(move |g| xi * g))
            .collect();
        assert_eq!(dw.data(), expected.as_slice());
        assert_eq!(db.data(), dy.data());
    }

    #[test]
    fn conv_examples() {
        let x = t(&[1, 1, 3, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 9.]);
        let y = conv2d_forward(&x, &t(&[1, 1, 1, 1], &[1.0]), &t(&[1], &[0.0]), Padding::Valid).unwrap();
        assert_eq!(y, x);

        let x = t(&[1, 1, 2, 2], &[1., 2., 3., 4.]);
        let k = t(&[1, 1, 2, 2], &[1., 0., 0., 1.]);
        let y = conv2d_forward(&x, &k, &t(&[1], &[0.0]), Padding::Valid).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[5.0]);

        let x = t(&[2, 2, 4, 4], &(0..64).map(f64::from).collect::<Vec<_>>());
        let k = Tensor::zeros(&[3, 2, 3, 3]);
        let y = conv2d_forward(&x, &k, &t(&[3], &[1.5, 1.5, 1.5]), Padding::Same).unwrap();
        assert_eq!(y.shape(), &[2, 3, 4, 4]);
        assert!(y.data().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn conv_same_padding_matches_direct_sum() {
        // Direct oracle: explicit zero-padded cross-correlation.
        let x = t(&[1, 2, 3, 4], &(0..24).map(|v| (v as f64 * 0.37).sin()).collect::<Vec<_>>());
        let k = t(&[2, 2, 3, 3], &(0..36).map(|v| (v as f64 * 0.11).cos()).collect::<Vec<_>>());
        let b = t(&[2], &[0.1, -0.2]);
        let y = conv2d_forward(&x, &k, &b, Padding::Same).unwrap();
        for co in 0..2 {
            for oy in 0..3 {
                for ox in 0..4 {
                    let mut acc = b.data()[co];
                    for ci in 0..2 {
                        for ki in 0..3 {
                            for kj in 0..3 {
                                let (iy, ix) = (oy as isize + ki as isize - 1, ox as isize + kj as isize - 1);
                                if (0..3).contains(&iy) && (0..4).contains(&ix) {
                                    acc += k.data()[((co * 2 + ci) * 3 + ki) * 3 + kj]
                                        * x.data()[(ci * 3 + iy as usize) * 4 + ix as usize];
                                }
                            }
                        }
                    }
                    let got = y.data()[(co * 3 + oy) * 4 + ox];
                    assert!((got - acc).abs() < 1e-12, "{got} vs {acc}");
                }
            }
        }
    }

    #[test]
    fn conv_kernel_larger_than_input_is_rejected() {
        let err = conv2d_forward(
            &Tensor::zeros(&[1, 1, 2, 2]),
            &Tensor::zeros(&[1, 1, 3, 3]),
            &Tensor::zeros(&[1]),
            Padding::Valid,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn maxpool_examples() {
        let p = maxpool2x2_forward(&t(&[1, 1, 2, 2], &[1., 2., 3., 4.])).unwrap();
        assert_eq!(p.output.data(), &[4.0]);
        assert_eq!(p.argmax, vec![3]);

        let p = maxpool2x2_forward(&Tensor::full(&[1, 2, 4, 4], 0.7)).unwrap();
        assert_eq!(p.output.shape(), &[1, 2, 2, 2]);
        assert!(p.output.data().iter().all(|&v| v == 0.7));
        // Ties go to the top-left cell of each window.
        assert_eq!(&p.argmax[..4], &[0, 2, 8, 10]);
    }

    #[test]
    fn maxpool_odd_sizes_ignore_padding() {
        let x = t(&[1, 1, 3, 3], &[-5., -4., -3., -2., -1., -6., -7., -8., -9.]);
        let p = maxpool2x2_forward(&x).unwrap();
        assert_eq!(p.output.shape(), &[1, 1, 2, 2]);
        assert_eq!(p.output.data(), &[-1.0, -3.0, -7.0, -9.0]);
        assert_eq!(p.argmax, vec![4, 2, 6, 8]);
    }

    proptest! {
        #[test]
        fn maxpool_matches_window_oracle(xs in prop::collection::vec(-1.0f64..1.0, 16)) {
            let x = t(&[1, 1, 4, 4], &xs);
            let p = maxpool2x2_forward(&x).unwrap();
            for oy in 0..2 {
                for ox in 0..2 {
                    let window = [
                        xs[(2 * oy) * 4 + 2 * ox],
                        xs[(2 * oy) * 4 + 2 * ox + 1],
                        xs[(2 * oy + 1) * 4 + 2 * ox],
                        xs[(2 * oy + 1) * 4 + 2 * ox + 1],
                    ];
                    let m = window.iter().cloned().fold(f64::MIN, f64::max);
                    prop_assert_eq!(p.output.data()[oy * 2 + ox], m);
                    prop_assert_eq!(xs[p.argmax[oy * 2 + ox]], m);
                }
            }
        }
    }

    #[test]
    fn cross_entropy_uniform_and_stable() {
        let (loss, _) = softmax_cross_entropy(&Tensor::zeros(&[3, 10]), &[0, 4, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);

        let (loss, grad) = softmax_cross_entropy(&t(&[1, 2], &[1000.0, 0.0]), &[0]).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(grad.all_finite());
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        let err = softmax_cross_entropy(&Tensor::zeros(&[1, 3]), &[3]).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn cross_entropy_gradient_matches_central_differences() {
        let logits: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64 * 0.8 - 1.3).collect();
        let labels = [1, 0, 3];
        let x = t(&[3, 4], &logits);
        let (_, grad) = softmax_cross_entropy(&x, &labels).unwrap();
        let eps = 1e-6;
        for i in 0..logits.len() {
            let mut plus = logits.clone();
            plus[i] += eps;
            let mut minus = logits.clone();
            minus[i] -= eps;
            let lp = softmax_cross_entropy(&t(&[3, 4], &plus), &labels).unwrap().0;
            let lm = softmax_cross_entropy(&t(&[3, 4], &minus), &labels).unwrap().0;
            let fd = (lp - lm) / (2.0 * eps);
            let a = grad.data()[i];
            assert!((fd - a).abs() / a.abs().max(fd.abs()) < 1e-4, "{i}: {a} vs {fd}");
        }
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(xs in prop::collection::vec(-50.0f64..50.0, 20)) {
            let p = softmax(&t(&[4, 5], &xs)).unwrap();
            for row in p.data().chunks_exact(5) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
