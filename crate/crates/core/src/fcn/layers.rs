//! Channel-major tensors and the layer kernels of the network.

use matrixmultiply::dgemm;

/// `channels x height x width` array, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * height * width, "tensor data length");
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    /// Zero-pads on the bottom and right.
    pub fn pad_to(&self, height: usize, width: usize) -> Self {
        if (height, width) == (self.height, self.width) {
            return self.clone();
        }
        let mut out = Self::zeros(self.channels, height, width);
        for c in 0..self.channels {
            for r in 0..self.height {
                let src = (c * self.height + r) * self.width;
                let dst = (c * height + r) * width;
                out.data[dst..dst + self.width].copy_from_slice(&self.data[src..src + self.width]);
            }
        }
        out
    }

    /// Top-left `height x width` window.
    pub fn crop(&self, height: usize, width: usize) -> Self {
        if (height, width) == (self.height, self.width) {
            return self.clone();
        }
        let mut out = Self::zeros(self.channels, height, width);
        for c in 0..self.channels {
            for r in 0..height {
                let src = (c * self.height + r) * self.width;
                let dst = (c * height + r) * width;
                out.data[dst..dst + width].copy_from_slice(&self.data[src..src + width]);
            }
        }
        out
    }

    /// Mirrors every channel left to right.
    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.width) {
            row.reverse();
        }
        out
    }

    /// Channel concatenation of two tensors with equal spatial dims.
    pub fn concat(&self, other: &Tensor) -> Self {
        assert_eq!((self.height, self.width), (other.height, other.width));
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Self {
            channels: self.channels + other.channels,
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Splits off the first `channels` channels.
    pub fn split_channels(&self, channels: usize) -> (Self, Self) {
        let n = channels * self.height * self.width;
        (
            Self::from_vec(channels, self.height, self.width, self.data[..n].to_vec()),
            Self::from_vec(
                self.channels - channels,
                self.height,
                self.width,
                self.data[n..].to_vec(),
            ),
        )
    }
}

/// Weights of one convolution: `weight[out][in][ky][kx]`, `bias[out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_channels, self.out_channels, self.kernel, self.stride)
    }

    fn pad(&self) -> usize {
        self.kernel / 2
    }

    pub fn output_dims(&self, height: usize, width: usize) -> (usize, usize) {
        let p = self.pad();
        (
            (height + 2 * p - self.kernel) / self.stride + 1,
            (width + 2 * p - self.kernel) / self.stride + 1,
        )
    }

    /// Output columns `ox` whose tap `kx` lands inside a row of `width` pixels.
    fn valid_columns(&self, kx: usize, width: usize, out_w: usize) -> (usize, usize) {
        let (s, p) = (self.stride, self.pad());
        // ix = ox * s + kx - p must lie in [0, width)
        let lo = if kx >= p { 0 } else { (p - kx).div_ceil(s) };
        let hi = if width + p > kx {
            ((width + p - kx - 1) / s + 1).min(out_w)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    /// Unfolds the input into a `(in * k * k) x (out_h * out_w)` patch matrix.
    fn im2col(&self, input: &Tensor, out_h: usize, out_w: usize) -> Vec<f64> {
        let (k, s, p) = (self.kernel, self.stride, self.pad());
        let n = out_h * out_w;
        let mut cols = vec![0.0; self.in_channels * k * k * n];
        for c in 0..self.in_channels {
            let plane = input.plane(c);
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((c * k + ky) * k + kx) * n;
                    let (lo, hi) = self.valid_columns(kx, input.width, out_w);
                    for oy in 0..out_h {
                        let iy = oy * s + ky;
                        if iy < p || iy - p >= input.height {
                            continue;
                        }
                        let src = (iy - p) * input.width;
                        let dst = &mut cols[row + oy * out_w..row + (oy + 1) * out_w];
                        if s == 1 {
                            let start = src + lo + kx - p;
                            dst[lo..hi].copy_from_slice(&plane[start..start + hi - lo]);
                        } else {
                            for ox in lo..hi {
                                dst[ox] = plane[src + ox * s + kx - p];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], height: usize, width: usize, out_h: usize, out_w: usize) -> Tensor {
        let (k, s, p) = (self.kernel, self.stride, self.pad());
        let n = out_h * out_w;
        let mut out = Tensor::zeros(self.in_channels, height, width);
        for c in 0..self.in_channels {
            let base = c * height * width;
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((c * k + ky) * k + kx) * n;
                    let (lo, hi) = self.valid_columns(kx, width, out_w);
                    for oy in 0..out_h {
                        let iy = oy * s + ky;
                        if iy < p || iy - p >= height {
                            continue;
                        }
                        let dst = base + (iy - p) * width;
                        let src = &cols[row + oy * out_w..row + (oy + 1) * out_w];
                        if s == 1 {
                            let start = dst + lo + kx - p;
                            for (o, v) in out.data[start..start + hi - lo].iter_mut().zip(&src[lo..hi]) {
                                *o += v;
                            }
                        } else {
                            for (ox, v) in src.iter().enumerate().take(hi).skip(lo) {
                                out.data[dst + ox * s + kx - p] += v;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Zero-padded "same" convolution (strided when `stride > 1`).
    /// Returns the output and the patch matrix needed by [`Conv::backward`].
    pub fn forward(&self, input: &Tensor) -> (Tensor, Vec<f64>) {
        assert_eq!(input.channels, self.in_channels, "conv input channels");
        let (out_h, out_w) = self.output_dims(input.height, input.width);
        let n = out_h * out_w;
        let kk = self.in_channels * self.kernel * self.kernel;
        let cols = if self.kernel == 1 && self.stride == 1 {
            input.data.clone()
        } else {
            self.im2col(input, out_h, out_w)
        };
        let mut out = Tensor::zeros(self.out_channels, out_h, out_w);
        for (o, chunk) in out.data.chunks_exact_mut(n).enumerate() {
            chunk.fill(self.bias[o]);
        }
        // out[o, n] += W[o, kk] * cols[kk, n]
        unsafe {
            dgemm(
                self.out_channels,
                kk,
                n,
                1.0,
                self.weight.as_ptr(),
                kk as isize,
                1,
                cols.as_ptr(),
                n as isize,
                1,
                1.0,
                out.data.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        (out, cols)
    }

    /// Accumulates weight and bias gradients into `grad` and returns the input gradient.
    pub fn backward(&self, input_dims: (usize, usize), cols: &[f64], upstream: &Tensor, grad: &mut Conv) -> Tensor {
        let (out_h, out_w) = (upstream.height, upstream.width);
        let n = out_h * out_w;
        let kk = self.in_channels * self.kernel * self.kernel;
        for (o, chunk) in upstream.data.chunks_exact(n).enumerate() {
            grad.bias[o] += chunk.iter().sum::<f64>();
        }
        let mut d_cols = vec![0.0; kk * n];
        unsafe {
            // dW[o, kk] += up[o, n] * cols[kk, n]^T
            dgemm(
                self.out_channels,
                n,
                kk,
                1.0,
                upstream.data.as_ptr(),
                n as isize,
                1,
                cols.as_ptr(),
                1,
                n as isize,
                1.0,
                grad.weight.as_mut_ptr(),
                kk as isize,
                1,
            );
            // dcols[kk, n] = W[o, kk]^T * up[o, n]
            dgemm(
                kk,
                self.out_channels,
                n,
                1.0,
                self.weight.as_ptr(),
                1,
                kk as isize,
                upstream.data.as_ptr(),
                n as isize,
                1,
                0.0,
                d_cols.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        let (h, w) = input_dims;
        if self.kernel == 1 && self.stride == 1 {
            Tensor::from_vec(self.in_channels, h, w, d_cols)
        } else {
            self.col2im(&d_cols, h, w, out_h, out_w)
        }
    }
}

/// Source taps of 2x linear upsampling with half-pixel centres, edge-clamped.
fn upsample_taps(out_len: usize, in_len: usize) -> Vec<[(usize, f64); 2]> {
    (0..out_len)
        .map(|o| {
            let i = o / 2;
            let other = if o % 2 == 0 {
                i.saturating_sub(1)
            } else {
                (i + 1).min(in_len - 1)
            };
            [(i, 0.75), (other, 0.25)]
        })
        .collect()
}

/// Fixed 2x bilinear upsampling.
pub fn upsample2(input: &Tensor) -> Tensor {
    let (h, w) = (input.height, input.width);
    let (oh, ow) = (2 * h, 2 * w);
    let rows = upsample_taps(oh, h);
    let cols = upsample_taps(ow, w);
    let mut out = Tensor::zeros(input.channels, oh, ow);
    for c in 0..input.channels {
        let src = input.plane(c);
        let dst = &mut out.data[c * oh * ow..(c + 1) * oh * ow];
        for (oy, ry) in rows.iter().enumerate() {
            for (ox, rx) in cols.iter().enumerate() {
                let mut v = 0.0;
                for &(iy, wy) in ry {
                    for &(ix, wx) in rx {
                        v += wy * wx * src[iy * w + ix];
                    }
                }
                dst[oy * ow + ox] = v;
            }
        }
    }
    out
}

/// Adjoint of [`upsample2`].
pub fn upsample2_backward(upstream: &Tensor, height: usize, width: usize) -> Tensor {
    let (oh, ow) = (upstream.height, upstream.width);
    let rows = upsample_taps(oh, height);
    let cols = upsample_taps(ow, width);
    let mut out = Tensor::zeros(upstream.channels, height, width);
    for c in 0..upstream.channels {
        let src = upstream.plane(c);
        let dst = &mut out.data[c * height * width..(c + 1) * height * width];
        for (oy, ry) in rows.iter().enumerate() {
            for (ox, rx) in cols.iter().enumerate() {
                let g = src[oy * ow + ox];
                for &(iy, wy) in ry {
                    for &(ix, wx) in rx {
                        dst[iy * width + ix] += wy * wx * g;
                    }
                }
            }
        }
    }
    out
}

pub fn relu(t: &mut Tensor) {
    t.data.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Zeroes the gradient wherever the activation was clipped.
pub fn relu_backward(activation: &Tensor, upstream: &mut Tensor) {
    for (g, &a) in upstream.data.iter_mut().zip(&activation.data) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution.
    fn naive_conv(conv: &Conv, input: &Tensor) -> Tensor {
        let (oh, ow) = conv.output_dims(input.height, input.width);
        let p = (conv.kernel / 2) as isize;
        let k = conv.kernel;
        let mut out = Tensor::zeros(conv.out_channels, oh, ow);
        for o in 0..conv.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut v = conv.bias[o];
                    for c in 0..conv.in_channels {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * conv.stride) as isize + ky as isize - p;
                                let ix = (ox * conv.stride) as isize + kx as isize - p;
                                if iy >= 0 && ix >= 0 && (iy as usize) < input.height && (ix as usize) < input.width {
                                    v += conv.weight[((o * conv.in_channels + c) * k + ky) * k + kx]
                                        * input.get(c, iy as usize, ix as usize);
                                }
                            }
                        }
                    }
                    out.data[(o * oh + oy) * ow + ox] = v;
                }
            }
        }
        out
    }

    fn filled(n: usize, seed: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 + 1.0) * seed).sin()).collect()
    }

    #[test]
    fn conv_matches_naive() {
        for &(k, s) in &[(3, 1), (3, 2), (1, 1)] {
            let mut conv = Conv::zeros(3, 4, k, s);
            conv.weight = filled(conv.weight.len(), 0.7);
            conv.bias = filled(4, 1.3);
            let input = Tensor::from_vec(3, 6, 8, filled(3 * 48, 0.37));
            let (fast, _) = conv.forward(&input);
            let slow = naive_conv(&conv, &input);
            assert_eq!((fast.height, fast.width), (slow.height, slow.width));
            for (a, b) in fast.data.iter().zip(&slow.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_backward_is_the_adjoint() {
        // <conv(x) - b, u> == <x, conv^T u> for the input gradient
        let mut conv = Conv::zeros(2, 3, 3, 2);
        conv.weight = filled(conv.weight.len(), 0.9);
        let x = Tensor::from_vec(2, 6, 6, filled(72, 0.21));
        let (y, cols) = conv.forward(&x);
        let u = Tensor::from_vec(3, y.height, y.width, filled(y.data.len(), 0.53));
        let mut grad = conv.zeros_like();
        let dx = conv.backward((6, 6), &cols, &u, &mut grad);
        let lhs: f64 = y.data.iter().zip(&u.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&dx.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn upsample_preserves_constants_and_is_adjoint() {
        let x = Tensor::from_vec(1, 3, 4, vec![2.5; 12]);
        assert!(upsample2(&x).data.iter().all(|&v| (v - 2.5).abs() < 1e-15));

        let x = Tensor::from_vec(2, 3, 4, filled(24, 0.4));
        let y = upsample2(&x);
        let u = Tensor::from_vec(2, 6, 8, filled(96, 0.77));
        let dx = upsample2_backward(&u, 3, 4);
        let lhs: f64 = y.data.iter().zip(&u.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&dx.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn pad_crop_roundtrip() {
        let x = Tensor::from_vec(2, 3, 5, filled(30, 0.1));
        assert_eq!(x.pad_to(8, 8).crop(3, 5), x);
        assert_eq!(x.flip_horizontal().flip_horizontal(), x);
    }
}
