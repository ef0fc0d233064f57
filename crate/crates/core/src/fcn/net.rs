//! A small encoder-decoder: three stride-2 encoder stages, three bilinear
//! decoder stages, a full-resolution skip connection and a 1x1 classifier.
//!
//! ```text
//! image -> stem(3x3) ---------------------------------------------+
//!            -> enc1(3x3/2) -> enc2(3x3/2) -> enc3(3x3/2)          |
//!            -> up -> dec3(3x3) -> up -> dec2(3x3) -> up -> concat -> dec1(3x3) -> head(1x1)
//! ```
//!
//! Inputs are zero-padded to a multiple of 8 and the logits cropped back.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::layers::{relu, relu_backward, upsample2, upsample2_backward, Conv, Tensor};
use crate::error::{Error, Result};
use crate::grid::LogitMap;

pub const STEM: usize = 0;
pub const ENC1: usize = 1;
pub const ENC2: usize = 2;
pub const ENC3: usize = 3;
pub const DEC3: usize = 4;
pub const DEC2: usize = 5;
pub const DEC1: usize = 6;
pub const HEAD: usize = 7;

pub const LAYER_NAMES: [&str; 8] = ["stem", "enc1", "enc2", "enc3", "dec3", "dec2", "dec1", "head"];

/// Spatial dims are padded up to a multiple of this.
pub const DOWNSAMPLE: usize = 8;

/// Channel widths of the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Widths {
    pub stem: usize,
    pub enc1: usize,
    pub enc2: usize,
    pub enc3: usize,
    pub dec3: usize,
    pub dec2: usize,
    pub dec1: usize,
}

impl Default for Widths {
    fn default() -> Self {
        Self {
            stem: 8,
            enc1: 16,
            enc2: 32,
            enc3: 32,
            dec3: 32,
            dec2: 16,
            dec1: 16,
        }
    }
}

/// All convolution weights of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct FcnParams {
    pub in_channels: usize,
    pub classes: usize,
    pub layers: Vec<Conv>,
}

impl FcnParams {
    pub fn zeros(in_channels: usize, classes: usize, widths: Widths) -> Self {
        let w = widths;
        let layers = vec![
            Conv::zeros(in_channels, w.stem, 3, 1),
            Conv::zeros(w.stem, w.enc1, 3, 2),
            Conv::zeros(w.enc1, w.enc2, 3, 2),
            Conv::zeros(w.enc2, w.enc3, 3, 2),
            Conv::zeros(w.enc3, w.dec3, 3, 1),
            Conv::zeros(w.dec3, w.dec2, 3, 1),
            Conv::zeros(w.dec2 + w.stem, w.dec1, 3, 1),
            Conv::zeros(w.dec1, classes, 1, 1),
        ];
        Self {
            in_channels,
            classes,
            layers,
        }
    }

    /// Kaiming-normal weights (fan-in scaling), zero biases.
    pub fn init(in_channels: usize, classes: usize, widths: Widths, seed: u64) -> Self {
        let mut params = Self::zeros(in_channels, classes, widths);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut params.layers {
            let fan_in = (layer.in_channels * layer.kernel * layer.kernel) as f64;
            let std = (2.0 / fan_in).sqrt();
            for w in &mut layer.weight {
                *w = std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        params
    }

    /// Rebuilds a network from layer shapes, as stored in a checkpoint.
    pub fn from_layers(layers: Vec<Conv>) -> Result<Self> {
        if layers.len() != LAYER_NAMES.len() {
            return Err(Error::Shape(format!(
                "expected {} layers, got {}",
                LAYER_NAMES.len(),
                layers.len()
            )));
        }
        let widths = Widths {
            stem: layers[STEM].out_channels,
            enc1: layers[ENC1].out_channels,
            enc2: layers[ENC2].out_channels,
            enc3: layers[ENC3].out_channels,
            dec3: layers[DEC3].out_channels,
            dec2: layers[DEC2].out_channels,
            dec1: layers[DEC1].out_channels,
        };
        let expected = Self::zeros(layers[STEM].in_channels, layers[HEAD].out_channels, widths);
        for (got, want) in layers.iter().zip(&expected.layers) {
            let shape = |c: &Conv| {
                (
                    c.in_channels,
                    c.out_channels,
                    c.kernel,
                    c.stride,
                    c.weight.len(),
                    c.bias.len(),
                )
            };
            if shape(got) != shape(want) {
                return Err(Error::Shape(format!(
                    "inconsistent layer shapes {:?} vs {:?}",
                    shape(got),
                    shape(want)
                )));
            }
        }
        if let Some(index) = layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias))
            .position(|v| !v.is_finite())
        {
            return Err(Error::NonFinite {
                what: "parameters",
                index,
            });
        }
        Ok(Self {
            in_channels: expected.in_channels,
            classes: expected.classes,
            layers,
        })
    }

    pub fn widths(&self) -> Widths {
        let l = &self.layers;
        Widths {
            stem: l[STEM].out_channels,
            enc1: l[ENC1].out_channels,
            enc2: l[ENC2].out_channels,
            enc3: l[ENC3].out_channels,
            dec3: l[DEC3].out_channels,
            dec2: l[DEC2].out_channels,
            dec1: l[DEC1].out_channels,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            in_channels: self.in_channels,
            classes: self.classes,
            layers: self.layers.iter().map(Conv::zeros_like).collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Every weight and bias block, in a fixed order.
    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    height: usize,
    width: usize,
    input_dims: Vec<(usize, usize)>,
    cols: Vec<Vec<f64>>,
    outputs: Vec<Tensor>,
}

impl ForwardCache {
    /// Post-activation output of a layer (the head output is the raw logits).
    pub fn output(&self, layer: usize) -> &Tensor {
        &self.outputs[layer]
    }
}

fn check_image(params: &FcnParams, image: &Tensor) -> Result<()> {
    if image.channels != params.in_channels {
        return Err(Error::Shape(format!(
            "network expects {} input channels, image has {}",
            params.in_channels, image.channels
        )));
    }
    if image.height == 0 || image.width == 0 {
        return Err(Error::Shape("empty image".into()));
    }
    if let Some(index) = image.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "image", index });
    }
    Ok(())
}

fn padded(n: usize) -> usize {
    n.div_ceil(DOWNSAMPLE) * DOWNSAMPLE
}

/// Logits as a channel-major tensor with the input's spatial dims, plus the cache.
pub fn forward_tensor(params: &FcnParams, image: &Tensor) -> Result<(Tensor, ForwardCache)> {
    check_image(params, image)?;
    let (h, w) = (image.height, image.width);
    let x = image.pad_to(padded(h), padded(w));
    let l = &params.layers;

    let mut input_dims = Vec::with_capacity(8);
    let mut cols = Vec::with_capacity(8);
    let mut outputs = Vec::with_capacity(8);
    let mut run = |layer: usize, input: &Tensor, activate: bool| -> Tensor {
        let (mut out, c) = l[layer].forward(input);
        if activate {
            relu(&mut out);
        }
        input_dims.push((input.height, input.width));
        cols.push(c);
        outputs.push(out.clone());
        out
    };

    let stem = run(STEM, &x, true);
    let e1 = run(ENC1, &stem, true);
    let e2 = run(ENC2, &e1, true);
    let e3 = run(ENC3, &e2, true);
    let d3 = run(DEC3, &upsample2(&e3), true);
    let d2 = run(DEC2, &upsample2(&d3), true);
    let d1 = run(DEC1, &upsample2(&d2).concat(&stem), true);
    let logits = run(HEAD, &d1, false);

    Ok((
        logits.crop(h, w),
        ForwardCache {
            height: h,
            width: w,
            input_dims,
            cols,
            outputs,
        },
    ))
}

/// Per-pixel class logits for `image`.
pub fn forward(params: &FcnParams, image: &Tensor) -> Result<LogitMap> {
    let (logits, _) = forward_tensor(params, image)?;
    Ok(to_logit_map(&logits))
}

/// Channel-major logits to a pixel-major [`LogitMap`].
pub fn to_logit_map(t: &Tensor) -> LogitMap {
    let n = t.height * t.width;
    let mut values = vec![0.0; n * t.channels];
    for c in 0..t.channels {
        for (i, &v) in t.plane(c).iter().enumerate() {
            values[i * t.channels + c] = v;
        }
    }
    LogitMap::new(t.height, t.width, t.channels, values).expect("network logits are finite")
}

/// Pixel-major per-logit gradient to a channel-major tensor.
pub fn gradient_tensor(grad: &[f64], height: usize, width: usize, classes: usize) -> Tensor {
    let n = height * width;
    let mut data = vec![0.0; n * classes];
    for i in 0..n {
        for c in 0..classes {
            data[c * n + i] = grad[i * classes + c];
        }
    }
    Tensor::from_vec(classes, height, width, data)
}

/// Gradient of `<logits, upstream>` with respect to every parameter.
/// `upstream` is channel-major with the logits' dims.
pub fn backward(params: &FcnParams, cache: &ForwardCache, upstream: &Tensor) -> FcnParams {
    assert_eq!(
        (upstream.height, upstream.width),
        (cache.height, cache.width),
        "upstream dims"
    );
    assert_eq!(upstream.channels, params.classes, "upstream channels");
    let l = &params.layers;
    let mut grads = params.zeros_like();
    let dims = |layer: usize| cache.input_dims[layer];

    let head_out = &cache.outputs[HEAD];
    let up = upstream.pad_to(head_out.height, head_out.width);

    let mut g = l[HEAD].backward(dims(HEAD), &cache.cols[HEAD], &up, &mut grads.layers[HEAD]);

    relu_backward(&cache.outputs[DEC1], &mut g);
    let g_cat = l[DEC1].backward(dims(DEC1), &cache.cols[DEC1], &g, &mut grads.layers[DEC1]);
    let (g_up2, mut g_stem_skip) = g_cat.split_channels(l[DEC2].out_channels);

    let d2 = &cache.outputs[DEC2];
    let mut g = upsample2_backward(&g_up2, d2.height, d2.width);
    relu_backward(d2, &mut g);
    let g_up3 = l[DEC2].backward(dims(DEC2), &cache.cols[DEC2], &g, &mut grads.layers[DEC2]);

    let d3 = &cache.outputs[DEC3];
    let mut g = upsample2_backward(&g_up3, d3.height, d3.width);
    relu_backward(d3, &mut g);
    let g_up_e3 = l[DEC3].backward(dims(DEC3), &cache.cols[DEC3], &g, &mut grads.layers[DEC3]);

    let e3 = &cache.outputs[ENC3];
    let mut g = upsample2_backward(&g_up_e3, e3.height, e3.width);
    relu_backward(e3, &mut g);
    let mut g = l[ENC3].backward(dims(ENC3), &cache.cols[ENC3], &g, &mut grads.layers[ENC3]);

    relu_backward(&cache.outputs[ENC2], &mut g);
    let mut g = l[ENC2].backward(dims(ENC2), &cache.cols[ENC2], &g, &mut grads.layers[ENC2]);

    relu_backward(&cache.outputs[ENC1], &mut g);
    let g = l[ENC1].backward(dims(ENC1), &cache.cols[ENC1], &g, &mut grads.layers[ENC1]);

    // stem output feeds both enc1 and the skip connection
    for (a, b) in g_stem_skip.data.iter_mut().zip(&g.data) {
        *a += b;
    }
    relu_backward(&cache.outputs[STEM], &mut g_stem_skip);
    l[STEM].backward(dims(STEM), &cache.cols[STEM], &g_stem_skip, &mut grads.layers[STEM]);

    grads
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_give_zero_logits() {
        let p = FcnParams::zeros(1, 2, Widths::default());
        let logits = forward(&p, &Tensor::zeros(1, 10, 13)).unwrap();
        assert_eq!((logits.height(), logits.width(), logits.classes()), (10, 13, 2));
        assert!(logits.values().iter().all(|&v| v == 0.0));
        let s = crate::grid::softmax(&logits).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn output_shape_matches_input() {
        let p = FcnParams::init(3, 4, Widths::default(), 1);
        for &(h, w) in &[(1, 1), (7, 9), (16, 16), (33, 20)] {
            let l = forward(&p, &Tensor::zeros(3, h, w)).unwrap();
            assert_eq!((l.height(), l.width(), l.classes()), (h, w, 4));
        }
    }

    #[test]
    fn identity_head_exposes_a_feature_channel() {
        let mut p = FcnParams::init(1, 2, Widths::default(), 3);
        let head = &mut p.layers[HEAD];
        head.weight.fill(0.0);
        head.bias.fill(0.0);
        // class-1 logit = dec1 channel 0
        head.weight[head.in_channels] = 1.0;
        let image = Tensor::from_vec(1, 8, 8, (0..64).map(|i| (i as f64 * 0.37).sin()).collect());
        let (logits, cache) = forward_tensor(&p, &image).unwrap();
        assert!(logits.plane(0).iter().all(|&v| v == 0.0));
        assert_eq!(logits.plane(1), cache.output(DEC1).plane(0));
    }

    #[test]
    fn rejects_bad_images() {
        let p = FcnParams::zeros(1, 2, Widths::default());
        let mut img = Tensor::zeros(1, 4, 4);
        img.data[3] = f64::NAN;
        assert!(matches!(forward(&p, &img), Err(Error::NonFinite { .. })));
        assert!(forward(&p, &Tensor::zeros(3, 4, 4)).is_err());
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let p = FcnParams::init(1, 2, Widths::default(), 5);
        let img = Tensor::from_vec(1, 9, 11, (0..99).map(|i| (i as f64).cos()).collect());
        let (_, cache) = forward_tensor(&p, &img).unwrap();
        let g = backward(&p, &cache, &Tensor::zeros(2, 9, 11));
        assert!(g.blocks().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn parameter_count_is_about_thirty_thousand() {
        let n = FcnParams::zeros(1, 2, Widths::default()).num_params();
        assert!((25_000..40_000).contains(&n), "{n}");
    }
}
