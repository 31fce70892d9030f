//! Layer specifications and their forward/backward kernels.
//!
//! Spatial tensors use height × width × channels layout. Convolutions are
//! stride 1 with "same" zero padding; max-pooling uses non-overlapping
//! windows (stride equal to the pool size) and floors odd dimensions.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::ops::sigmoid_scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d { filters: usize, kernel: usize },
    MaxPool2d { size: usize },
    Flatten,
    Dense { units: usize },
    Dropout { rate: f64 },
    Activation { function: Activation },
}

impl LayerSpec {
    pub fn conv(filters: usize, kernel: usize) -> Self {
        LayerSpec::Conv2d { filters, kernel }
    }

    pub fn pool(size: usize) -> Self {
        LayerSpec::MaxPool2d { size }
    }

    pub fn dense(units: usize) -> Self {
        LayerSpec::Dense { units }
    }

    pub fn dropout(rate: f64) -> Self {
        LayerSpec::Dropout { rate }
    }

    pub fn relu() -> Self {
        LayerSpec::Activation {
            function: Activation::Relu,
        }
    }

    pub fn sigmoid() -> Self {
        LayerSpec::Activation {
            function: Activation::Sigmoid,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Activation { .. } => "activation",
        }
    }

    pub(crate) fn validate(&self, index: usize) -> Result<()> {
        let bad = |message: &str| {
            Err(NnError::InvalidSpec {
                index,
                message: message.to_string(),
            })
        };
        match *self {
            LayerSpec::Conv2d { filters, kernel } => {
                if filters == 0 {
                    return bad("filter count must be at least 1");
                }
                if kernel == 0 {
                    return bad("kernel size must be at least 1");
                }
            }
            LayerSpec::MaxPool2d { size: 0 } => {
                return bad("pool size must be at least 1");
            }
            LayerSpec::Dense { units: 0 } => {
                return bad("neuron count must be at least 1");
            }
            LayerSpec::Dropout { rate } if !(0.0..1.0).contains(&rate) => {
                return bad("drop rate must lie in [0, 1)");
            }
            _ => {}
        }
        Ok(())
    }

    /// Output shape for an input of `input`, or a shape error naming the layer.
    pub(crate) fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let err = |message: String| NnError::LayerShape {
            index,
            kind: self.kind(),
            message,
        };
        match *self {
            LayerSpec::Conv2d { filters, .. } => match input {
                [h, w, _] => Ok(vec![*h, *w, filters]),
                _ => Err(err(format!("expected H×W×C input, got {input:?}"))),
            },
            LayerSpec::MaxPool2d { size } => match input {
                [h, w, c] if *h >= size && *w >= size => Ok(vec![h / size, w / size, *c]),
                [_, _, _] => Err(err(format!("pool size {size} exceeds input {input:?}"))),
                _ => Err(err(format!("expected H×W×C input, got {input:?}"))),
            },
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { units } => match input {
                [_] => Ok(vec![units]),
                _ => Err(err(format!(
                    "expected a flat input, got {input:?} (insert a flatten layer)"
                ))),
            },
            LayerSpec::Dropout { .. } | LayerSpec::Activation { .. } => Ok(input.to_vec()),
        }
    }

    /// Parameter shapes (weight then bias) for a layer fed with `input`.
    pub(crate) fn param_shapes(&self, input: &[usize]) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d { filters, kernel } => {
                vec![vec![kernel, kernel, input[2], filters], vec![filters]]
            }
            LayerSpec::Dense { units } => vec![vec![input[0], units], vec![units]],
            _ => Vec::new(),
        }
    }
}

/// Per-layer values retained by a training-mode forward pass.
#[derive(Debug, Clone)]
pub(crate) enum LayerCache {
    Input(Tensor),
    PoolArgmax(Vec<usize>),
    Mask(Vec<f64>),
    Output(Tensor),
    None,
}

/// A layer with its resolved shapes and materialized parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub(crate) spec: LayerSpec,
    pub(crate) input_shape: Vec<usize>,
    pub(crate) output_shape: Vec<usize>,
    pub(crate) params: Vec<Tensor>,
}

impl Layer {
    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    /// He-style uniform initialization with limit `sqrt(6 / fan_in)`; biases zero.
    pub(crate) fn init_params(spec: &LayerSpec, input: &[usize], rng: &mut impl Rng) -> Vec<Tensor> {
        spec.param_shapes(input)
            .into_iter()
            .enumerate()
            .map(|(i, shape)| {
                if i == 1 {
                    return Tensor::zeros(&shape);
                }
                let fan_in: usize = shape[..shape.len() - 1].iter().product();
                let limit = (6.0 / fan_in as f64).sqrt();
                let len = shape.iter().product();
                let data = (0..len).map(|_| rng.gen_range(-limit..limit)).collect();
                Tensor::new(shape, data).expect("shape/data agree")
            })
            .collect()
    }

    pub(crate) fn forward(&self, x: Tensor, train: bool, rng: &mut dyn RngCore) -> (Tensor, LayerCache) {
        match self.spec {
            LayerSpec::Conv2d { filters, kernel } => {
                let out = conv_forward(&x, &self.params[0], &self.params[1], kernel, filters);
                (out, cache_if(train, || LayerCache::Input(x)))
            }
            LayerSpec::MaxPool2d { size } => {
                let (out, argmax) = pool_forward(&x, size);
                (out, cache_if(train, || LayerCache::PoolArgmax(argmax)))
            }
            LayerSpec::Flatten => {
                let len = x.len();
                (x.reshape(vec![len]).expect("same length"), LayerCache::None)
            }
            LayerSpec::Dense { units } => {
                let out = dense_forward(&x, &self.params[0], &self.params[1], units);
                (out, cache_if(train, || LayerCache::Input(x)))
            }
            LayerSpec::Dropout { rate } => {
                if !train || rate == 0.0 {
                    return (x, LayerCache::None);
                }
                let keep = 1.0 - rate;
                let mask: Vec<f64> = (0..x.len())
                    .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { 1.0 / keep })
                    .collect();
                let mut out = x;
                for (o, m) in out.data_mut().iter_mut().zip(&mask) {
                    *o *= m;
                }
                (out, LayerCache::Mask(mask))
            }
            LayerSpec::Activation { function } => {
                let out = match function {
                    Activation::Relu => x.map(|v| v.max(0.0)),
                    Activation::Sigmoid => x.map(sigmoid_scalar),
                };
                let cache = cache_if(train, || LayerCache::Output(out.clone()));
                (out, cache)
            }
        }
    }

    /// Returns the input gradient (when requested) and parameter gradients.
    pub(crate) fn backward(
        &self,
        cache: &LayerCache,
        grad: Tensor,
        need_input_grad: bool,
    ) -> (Option<Tensor>, Vec<Tensor>) {
        match (&self.spec, cache) {
            (LayerSpec::Conv2d { filters, kernel }, LayerCache::Input(x)) => {
                let (dx, dw, db) = conv_backward(x, &self.params[0], &grad, *kernel, *filters, need_input_grad);
                (dx, vec![dw, db])
            }
            (LayerSpec::MaxPool2d { .. }, LayerCache::PoolArgmax(argmax)) => {
                let mut dx = Tensor::zeros(&self.input_shape);
                let d = dx.data_mut();
                for (&src, &g) in argmax.iter().zip(grad.data()) {
                    d[src] += g;
                }
                (Some(dx), Vec::new())
            }
            (LayerSpec::Flatten, _) => (
                Some(grad.reshape(self.input_shape.clone()).expect("same length")),
                Vec::new(),
            ),
            (LayerSpec::Dense { units }, LayerCache::Input(x)) => {
                let (dx, dw, db) = dense_backward(x, &self.params[0], &grad, *units);
                (Some(dx), vec![dw, db])
            }
            (LayerSpec::Dropout { .. }, LayerCache::Mask(mask)) => {
                let mut dx = grad;
                for (g, m) in dx.data_mut().iter_mut().zip(mask) {
                    *g *= m;
                }
                (Some(dx), Vec::new())
            }
            (LayerSpec::Dropout { .. }, LayerCache::None) => (Some(grad), Vec::new()),
            (LayerSpec::Activation { function }, LayerCache::Output(y)) => {
                let mut dx = grad;
                for (g, &yv) in dx.data_mut().iter_mut().zip(y.data()) {
                    *g *= match function {
                        Activation::Relu => {
                            if yv > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        Activation::Sigmoid => yv * (1.0 - yv),
                    };
                }
                (Some(dx), Vec::new())
            }
            (spec, _) => unreachable!("cache does not belong to a {} layer", spec.kind()),
        }
    }
}

fn cache_if(train: bool, f: impl FnOnce() -> LayerCache) -> LayerCache {
    if train {
        f()
    } else {
        LayerCache::None
    }
}

fn conv_forward(x: &Tensor, weight: &Tensor, bias: &Tensor, k: usize, cout: usize) -> Tensor {
    let (h, w, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let pad = (k - 1) / 2;
    let input = x.data();
    let wt = weight.data();
    let mut out = vec![0.0; h * w * cout];
    for y in 0..h {
        for xx in 0..w {
            let o = &mut out[(y * w + xx) * cout..][..cout];
            o.copy_from_slice(bias.data());
            for ky in 0..k {
                let Some(iy) = (y + ky).checked_sub(pad).filter(|&v| v < h) else {
                    continue;
                };
                for kx in 0..k {
                    let Some(ix) = (xx + kx).checked_sub(pad).filter(|&v| v < w) else {
                        continue;
                    };
                    let inp = &input[(iy * w + ix) * cin..][..cin];
                    let wbase = &wt[(ky * k + kx) * cin * cout..][..cin * cout];
                    for (ci, &v) in inp.iter().enumerate() {
                        if v == 0.0 {
                            continue;
                        }
                        let row = &wbase[ci * cout..][..cout];
                        for (oo, &ww) in o.iter_mut().zip(row) {
                            *oo += v * ww;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![h, w, cout], out).expect("conv output shape")
}

fn conv_backward(
    x: &Tensor,
    weight: &Tensor,
    grad: &Tensor,
    k: usize,
    cout: usize,
    need_input_grad: bool,
) -> (Option<Tensor>, Tensor, Tensor) {
    let (h, w, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let pad = (k - 1) / 2;
    let input = x.data();
    let wt = weight.data();
    let g = grad.data();
    let mut dw = vec![0.0; wt.len()];
    let mut db = vec![0.0; cout];
    let mut dx = if need_input_grad {
        vec![0.0; input.len()]
    } else {
        Vec::new()
    };
    for y in 0..h {
        for xx in 0..w {
            let go = &g[(y * w + xx) * cout..][..cout];
            for (b, &gv) in db.iter_mut().zip(go) {
                *b += gv;
            }
            for ky in 0..k {
                let Some(iy) = (y + ky).checked_sub(pad).filter(|&v| v < h) else {
                    continue;
                };
                for kx in 0..k {
                    let Some(ix) = (xx + kx).checked_sub(pad).filter(|&v| v < w) else {
                        continue;
                    };
                    let base = (iy * w + ix) * cin;
                    let wofs = (ky * k + kx) * cin * cout;
                    for ci in 0..cin {
                        let v = input[base + ci];
                        let row = wofs + ci * cout;
                        if v != 0.0 {
                            for (d, &gv) in dw[row..row + cout].iter_mut().zip(go) {
                                *d += v * gv;
                            }
                        }
                        if need_input_grad {
                            let dot: f64 = wt[row..row + cout].iter().zip(go).map(|(a, b)| a * b).sum();
                            dx[base + ci] += dot;
                        }
                    }
                }
            }
        }
    }
    let dx = need_input_grad.then(|| Tensor::new(x.shape().to_vec(), dx).expect("shape"));
    (
        dx,
        Tensor::new(weight.shape().to_vec(), dw).expect("shape"),
        Tensor::new(vec![cout], db).expect("shape"),
    )
}

fn pool_forward(x: &Tensor, size: usize) -> (Tensor, Vec<usize>) {
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (h / size, w / size);
    let input = x.data();
    let mut out = vec![f64::NEG_INFINITY; oh * ow * c];
    let mut argmax = vec![0usize; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let obase = (oy * ow + ox) * c;
            for dy in 0..size {
                for dx in 0..size {
                    let ibase = ((oy * size + dy) * w + ox * size + dx) * c;
                    for ch in 0..c {
                        let v = input[ibase + ch];
                        if v > out[obase + ch] {
                            out[obase + ch] = v;
                            argmax[obase + ch] = ibase + ch;
                        }
                    }
                }
            }
        }
    }
    (Tensor::new(vec![oh, ow, c], out).expect("pool output shape"), argmax)
}

fn dense_forward(x: &Tensor, weight: &Tensor, bias: &Tensor, units: usize) -> Tensor {
    let mut out = bias.data().to_vec();
    let wt = weight.data();
    for (i, &v) in x.data().iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        for (o, &ww) in out.iter_mut().zip(&wt[i * units..(i + 1) * units]) {
            *o += v * ww;
        }
    }
    Tensor::new(vec![units], out).expect("dense output shape")
}

fn dense_backward(x: &Tensor, weight: &Tensor, grad: &Tensor, units: usize) -> (Tensor, Tensor, Tensor) {
    let wt = weight.data();
    let g = grad.data();
    let mut dw = vec![0.0; wt.len()];
    let mut dx = vec![0.0; x.len()];
    for (i, &v) in x.data().iter().enumerate() {
        let row = &wt[i * units..(i + 1) * units];
        dx[i] = row.iter().zip(g).map(|(a, b)| a * b).sum();
        if v != 0.0 {
            for (d, &gv) in dw[i * units..(i + 1) * units].iter_mut().zip(g) {
                *d += v * gv;
            }
        }
    }
    (
        Tensor::new(x.shape().to_vec(), dx).expect("shape"),
        Tensor::new(weight.shape().to_vec(), dw).expect("shape"),
        grad.clone(),
    )
}
