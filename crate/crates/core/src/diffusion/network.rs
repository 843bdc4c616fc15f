//! Shallow convolutional denoiser over real/imaginary image channels with the
//! diffusion time as an extra constant channel. Circular dilated 3x3
//! convolutions, ReLU between layers, hand-written backward pass.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::arg_err;
use crate::tensor::{ComplexArray, C64};
use crate::Result;

const TAPS: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub cin: usize,
    pub cout: usize,
    /// Spacing between kernel taps in pixels.
    pub dilation: usize,
}

impl LayerShape {
    fn n_weights(&self) -> usize {
        self.cout * self.cin * TAPS
    }

    fn n_params(&self) -> usize {
        self.n_weights() + self.cout
    }
}

/// Residual network `r = f_theta([Re x, Im x] * c_in, t)` on one image.
/// Parameters live in one flat vector, layer by layer, each layer's
/// `[cout, cin, 3, 3]` weights followed by its `cout` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvDenoiser {
    layers: Vec<LayerShape>,
    params: Vec<f64>,
}

/// Activations kept from the forward pass for backpropagation.
pub(crate) struct ForwardCache {
    /// Inputs to each layer (after the previous ReLU), `[cin, ny, nx]` flattened.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation outputs of each hidden layer.
    pre: Vec<Vec<f64>>,
    ny: usize,
    nx: usize,
}

impl ConvDenoiser {
    /// Layers `3 -> width -> width -> width -> 2` with dilations 1, 2, 4, 1
    /// (a 17x17 receptive field) and He-normal weights; the last layer starts
    /// at a tenth of that scale so the initial residual is small.
    pub fn new<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Result<Self> {
        if width == 0 {
            return arg_err("denoiser width must be positive");
        }
        let layers = vec![
            LayerShape { cin: 3, cout: width, dilation: 1 },
            LayerShape { cin: width, cout: width, dilation: 2 },
            LayerShape { cin: width, cout: width, dilation: 4 },
            LayerShape { cin: width, cout: 2, dilation: 1 },
        ];
        let mut params = Vec::new();
        let last = layers.len() - 1;
        for (l, shape) in layers.iter().enumerate() {
            let mut std = (2.0 / (shape.cin * TAPS) as f64).sqrt();
            if l == last {
                std *= 0.1;
            }
            for _ in 0..shape.n_weights() {
                let g: f64 = StandardNormal.sample(rng);
                params.push(std * g);
            }
            params.extend(std::iter::repeat_n(0.0, shape.cout));
        }
        Ok(ConvDenoiser { layers, params })
    }

    pub fn from_parts(layers: Vec<LayerShape>, params: Vec<f64>) -> Result<Self> {
        if layers.is_empty() || layers[0].cin != 3 || layers.last().map(|l| l.cout) != Some(2) {
            return arg_err("denoiser must map 3 input channels to 2 output channels");
        }
        if layers.iter().any(|l| l.dilation == 0) {
            return arg_err("layer dilation must be positive");
        }
        if layers.windows(2).any(|w| w[0].cout != w[1].cin) {
            return arg_err("consecutive layer widths do not chain");
        }
        let expected: usize = layers.iter().map(LayerShape::n_params).sum();
        if params.len() != expected {
            return arg_err(format!("expected {expected} parameters, got {}", params.len()));
        }
        Ok(ConvDenoiser { layers, params })
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.layers.len());
        let mut acc = 0;
        for l in &self.layers {
            off.push(acc);
            acc += l.n_params();
        }
        off
    }

    /// Residual for the image `x` (`[ny, nx]`) at time `t`; `c_in` scales
    /// the image channels.
    pub(crate) fn forward(&self, x: &ComplexArray, t: f64, c_in: f64) -> (ComplexArray, ForwardCache) {
        let (ny, nx) = (x.shape()[0], x.shape()[1]);
        let n = ny * nx;
        let mut input = Vec::with_capacity(3 * n);
        input.extend(x.data().iter().map(|v| v.re * c_in));
        input.extend(x.data().iter().map(|v| v.im * c_in));
        input.extend(std::iter::repeat_n(t, n));
        let offsets = self.offsets();
        let mut inputs = vec![input];
        let mut pre = Vec::new();
        let last = self.layers.len() - 1;
        for (l, shape) in self.layers.iter().enumerate() {
            let p = &self.params[offsets[l]..offsets[l] + shape.n_params()];
            let out = conv_forward(inputs.last().expect("nonempty"), p, *shape, ny, nx);
            if l == last {
                let r = ComplexArray::from_fn(&[ny, nx], |i| C64::new(out[i], out[n + i]));
                return (r, ForwardCache { inputs, pre, ny, nx });
            }
            let act = out.iter().map(|v| v.max(0.0)).collect();
            pre.push(out);
            inputs.push(act);
        }
        unreachable!("layer list is nonempty")
    }

    /// Parameter gradient given `d loss / d r` packed as complex
    /// (real part for the real channel, imaginary part for the imaginary one).
    pub(crate) fn backward(&self, cache: &ForwardCache, grad_r: &ComplexArray) -> Vec<f64> {
        let (ny, nx) = (cache.ny, cache.nx);
        let n = ny * nx;
        let offsets = self.offsets();
        let mut grad = vec![0.0; self.params.len()];
        let mut g: Vec<f64> = grad_r.data().iter().map(|v| v.re).chain(grad_r.data().iter().map(|v| v.im)).collect();
        for l in (0..self.layers.len()).rev() {
            let shape = self.layers[l];
            let p = &self.params[offsets[l]..offsets[l] + shape.n_params()];
            let gp = &mut grad[offsets[l]..offsets[l] + shape.n_params()];
            let g_in = conv_backward(&cache.inputs[l], &g, p, gp, shape, ny, nx, l > 0);
            if l > 0 {
                let pre = &cache.pre[l - 1];
                g = g_in.into_iter().zip(pre).map(|(gi, &z)| if z > 0.0 { gi } else { 0.0 }).collect();
                debug_assert_eq!(g.len(), shape.cin * n);
            }
        }
        grad
    }
}

fn tap_offset(tap: usize, dilation: usize) -> (isize, isize) {
    let d = dilation as isize;
    (d * ((tap / 3) as isize - 1), d * ((tap % 3) as isize - 1))
}

/// `dst[y][x] += w * src[(y + dy) mod ny][(x + dx) mod nx]`
fn add_shifted(dst: &mut [f64], src: &[f64], ny: usize, nx: usize, dy: isize, dx: isize, w: f64) {
    let sx = dx.rem_euclid(nx as isize) as usize;
    for y in 0..ny {
        let sy = (y as isize + dy).rem_euclid(ny as isize) as usize;
        let d = &mut dst[y * nx..(y + 1) * nx];
        let s = &src[sy * nx..(sy + 1) * nx];
        let split = nx - sx;
        for (a, b) in d[..split].iter_mut().zip(&s[sx..]) {
            *a += w * b;
        }
        for (a, b) in d[split..].iter_mut().zip(&s[..sx]) {
            *a += w * b;
        }
    }
}

/// `sum_{y,x} g[y][x] * src[(y + dy) mod ny][(x + dx) mod nx]`
fn dot_shifted(g: &[f64], src: &[f64], ny: usize, nx: usize, dy: isize, dx: isize) -> f64 {
    let sx = dx.rem_euclid(nx as isize) as usize;
    let mut acc = 0.0;
    for y in 0..ny {
        let sy = (y as isize + dy).rem_euclid(ny as isize) as usize;
        let d = &g[y * nx..(y + 1) * nx];
        let s = &src[sy * nx..(sy + 1) * nx];
        let split = nx - sx;
        acc += d[..split].iter().zip(&s[sx..]).map(|(a, b)| a * b).sum::<f64>();
        acc += d[split..].iter().zip(&s[..sx]).map(|(a, b)| a * b).sum::<f64>();
    }
    acc
}

fn conv_forward(input: &[f64], p: &[f64], shape: LayerShape, ny: usize, nx: usize) -> Vec<f64> {
    let n = ny * nx;
    let (w, b) = p.split_at(shape.n_weights());
    let mut out = vec![0.0; shape.cout * n];
    for o in 0..shape.cout {
        let dst = &mut out[o * n..(o + 1) * n];
        dst.iter_mut().for_each(|v| *v = b[o]);
        for i in 0..shape.cin {
            let src = &input[i * n..(i + 1) * n];
            for tap in 0..TAPS {
                let (dy, dx) = tap_offset(tap, shape.dilation);
                add_shifted(dst, src, ny, nx, dy, dx, w[(o * shape.cin + i) * TAPS + tap]);
            }
        }
    }
    out
}

/// Accumulates parameter gradients into `gp` and returns the input gradient
/// (empty when `need_input` is false).
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    g_out: &[f64],
    p: &[f64],
    gp: &mut [f64],
    shape: LayerShape,
    ny: usize,
    nx: usize,
    need_input: bool,
) -> Vec<f64> {
    let n = ny * nx;
    let nw = shape.n_weights();
    let w = &p[..nw];
    let mut g_in = if need_input { vec![0.0; shape.cin * n] } else { Vec::new() };
    for o in 0..shape.cout {
        let go = &g_out[o * n..(o + 1) * n];
        gp[nw + o] += go.iter().sum::<f64>();
        for i in 0..shape.cin {
            let src = &input[i * n..(i + 1) * n];
            for tap in 0..TAPS {
                let (dy, dx) = tap_offset(tap, shape.dilation);
                let k = (o * shape.cin + i) * TAPS + tap;
                gp[k] += dot_shifted(go, src, ny, nx, dy, dx);
                if need_input {
                    add_shifted(&mut g_in[i * n..(i + 1) * n], go, ny, nx, -dy, -dx, w[k]);
                }
            }
        }
    }
    g_in
}
