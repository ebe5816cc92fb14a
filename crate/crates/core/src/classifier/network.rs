//! Forward and backward passes over a flat parameter vector.
//!
//! Layer `l` maps `fan_in -> fan_out` and occupies `fan_in * fan_out` weights
//! (row-major, input index major) followed by `fan_out` biases.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;

use super::{softmax_in_place, Activation, ModelSpec, LOG_CLAMP};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy)]
struct LayerShape {
    offset: usize,
    fan_in: usize,
    fan_out: usize,
}

impl LayerShape {
    fn weights<'a>(&self, params: &'a [f64]) -> ArrayView2<'a, f64> {
        let n = self.fan_in * self.fan_out;
        ArrayView2::from_shape((self.fan_in, self.fan_out), &params[self.offset..self.offset + n]).expect("weight view")
    }

    fn bias<'a>(&self, params: &'a [f64]) -> ArrayView1<'a, f64> {
        let start = self.offset + self.fan_in * self.fan_out;
        ArrayView1::from(&params[start..start + self.fan_out])
    }

    fn grads_mut<'a>(&self, grad: &'a mut [f64]) -> (ArrayViewMut2<'a, f64>, ArrayViewMut1<'a, f64>) {
        let n = self.fan_in * self.fan_out;
        let (w, b) = grad[self.offset..self.offset + n + self.fan_out].split_at_mut(n);
        (
            ArrayViewMut2::from_shape((self.fan_in, self.fan_out), w).expect("grad view"),
            ArrayViewMut1::from(b),
        )
    }
}

fn layers(spec: &ModelSpec) -> Vec<LayerShape> {
    let dims = spec.layer_dims();
    let mut offset = 0;
    dims.windows(2)
        .map(|w| {
            let layer = LayerShape { offset, fan_in: w[0], fan_out: w[1] };
            offset += w[0] * w[1] + w[1];
            layer
        })
        .collect()
}

/// Uniform initialization: He scale (`sqrt(6 / fan_in)`, variance
/// `2 / fan_in`) for ReLU hidden layers, Glorot (`sqrt(6 / (fan_in +
/// fan_out))`) for tanh hidden layers and every output layer. Biases start at 0.
pub(crate) fn init_params(spec: &ModelSpec) -> Vec<f64> {
    let mut rng = seed::rng(spec.init_seed);
    let shapes = layers(spec);
    let mut params = vec![0.0; spec.param_count()];
    let last = shapes.len() - 1;
    for (l, shape) in shapes.iter().enumerate() {
        let (fi, fo) = (shape.fan_in as f64, shape.fan_out as f64);
        let limit = match spec.activation() {
            Some(Activation::Relu) if l < last => (6.0 / fi).sqrt(),
            _ => (6.0 / (fi + fo)).sqrt(),
        };
        for w in &mut params[shape.offset..shape.offset + shape.fan_in * shape.fan_out] {
            *w = rng.random_range(-limit..=limit);
        }
    }
    params
}

fn activate(a: &mut Array2<f64>, act: Activation) {
    match act {
        Activation::Relu => a.mapv_inplace(|v| v.max(0.0)),
        Activation::Tanh => a.mapv_inplace(f64::tanh),
    }
}

/// Hidden activations (post-nonlinearity) and output logits.
struct Forward {
    hidden: Vec<Array2<f64>>,
    logits: Array2<f64>,
}

fn forward(spec: &ModelSpec, params: &[f64], x: ArrayView2<'_, f64>) -> Forward {
    let shapes = layers(spec);
    let act = spec.activation();
    let batch = x.nrows();
    let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(shapes.len() - 1);
    for (l, shape) in shapes.iter().enumerate() {
        let mut out = Array2::zeros((batch, shape.fan_out));
        out += &shape.bias(params);
        {
            let input = if l == 0 { x.view() } else { hidden[l - 1].view() };
            general_mat_mul(1.0, &input, &shape.weights(params), 1.0, &mut out);
        }
        if l + 1 < shapes.len() {
            activate(&mut out, act.expect("hidden layers imply an activation"));
            hidden.push(out);
        } else {
            return Forward { hidden, logits: out };
        }
    }
    unreachable!("a model has at least one layer")
}

/// Row-wise class probabilities for a batch of inputs.
pub(crate) fn predict_rows(spec: &ModelSpec, params: &[f64], x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut probs = forward(spec, params, x).logits;
    for mut row in probs.rows_mut() {
        softmax_in_place(row.as_slice_mut().expect("standard layout"));
    }
    probs
}

/// Mean clamped cross-entropy over the batch plus `weight_decay / 2 * ||W||^2`
/// (weights only), and its gradient written into `grad`.
///
/// `x` is `batch x input_dim`; `targets` holds one class per row.
pub fn loss_and_gradient(
    spec: &ModelSpec,
    params: &[f64],
    x: ArrayView2<'_, f64>,
    targets: &[usize],
    weight_decay: f64,
    grad: &mut [f64],
) -> Result<f64> {
    let batch = x.nrows();
    if batch == 0 {
        return Err(Error::EmptyInput);
    }
    if batch != targets.len() {
        return Err(Error::LengthMismatch { left: batch, right: targets.len() });
    }
    if x.ncols() != spec.input_dim {
        return Err(Error::DimensionMismatch { expected: spec.input_dim, found: x.ncols() });
    }
    if grad.len() != params.len() || params.len() != spec.param_count() {
        return Err(Error::DimensionMismatch { expected: spec.param_count(), found: params.len() });
    }
    if let Some(&class) = targets.iter().find(|&&t| t >= spec.num_classes) {
        return Err(Error::ClassOutOfRange { class, num_classes: spec.num_classes });
    }

    let shapes = layers(spec);
    let act = spec.activation();
    let Forward { hidden, logits } = forward(spec, params, x);

    // delta <- (softmax - onehot) / batch
    let mut delta = logits;
    let mut loss = 0.0;
    let scale = 1.0 / batch as f64;
    for (mut row, &t) in delta.rows_mut().into_iter().zip(targets) {
        let row = row.as_slice_mut().expect("standard layout");
        softmax_in_place(row);
        loss -= row[t].max(LOG_CLAMP).ln();
        row[t] -= 1.0;
        row.iter_mut().for_each(|v| *v *= scale);
    }
    loss *= scale;

    for (l, shape) in shapes.iter().enumerate().rev() {
        let input = if l == 0 { x.view() } else { hidden[l - 1].view() };
        {
            let (mut gw, mut gb) = shape.grads_mut(grad);
            general_mat_mul(1.0, &input.t(), &delta, 0.0, &mut gw);
            gb.assign(&delta.sum_axis(Axis(0)));
            if weight_decay > 0.0 {
                let w = shape.weights(params);
                gw.scaled_add(weight_decay, &w);
                loss += 0.5 * weight_decay * w.iter().map(|v| v * v).sum::<f64>();
            }
        }
        if l > 0 {
            let mut back = Array2::zeros((batch, shape.fan_in));
            general_mat_mul(1.0, &delta, &shape.weights(params).t(), 0.0, &mut back);
            let a = &hidden[l - 1];
            match act.expect("hidden layers imply an activation") {
                Activation::Relu => back.zip_mut_with(a, |d, &h| {
                    if h <= 0.0 {
                        *d = 0.0
                    }
                }),
                Activation::Tanh => back.zip_mut_with(a, |d, &h| *d *= 1.0 - h * h),
            }
            delta = back;
        }
    }
    Ok(loss)
}
