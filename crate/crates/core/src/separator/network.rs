//! Forward pass with activation trace, and the matching reverse pass.
//!
//! Shapes, with `F` frames, `N` filters, `L` kernel length, `M` outputs:
//!
//! ```text
//! frames  F×L ──enc──▶ pre F×N ──relu──▶ rep F×N ──MLP──▶ logits F×MN ──act──▶ masks
//! masked_m = masks[:, mN..(m+1)N] ⊙ rep ──dec──▶ F×L ──overlap-add──▶ output_m
//! ```

use ndarray::{s, Array2, ArrayView2, Axis};

use super::params::{MaskActivation, SeparatorConfig, SeparatorParams};

pub(crate) struct Trace {
    num_samples: usize,
    frames: Array2<f64>,
    pre_encoding: Array2<f64>,
    representation: Array2<f64>,
    /// Pre-activation and post-activation of each hidden layer.
    hidden: Vec<(Array2<f64>, Array2<f64>)>,
    logits: Array2<f64>,
    masks: Array2<f64>,
}

pub(crate) fn num_frames(num_samples: usize, kernel_len: usize, stride: usize) -> usize {
    if num_samples <= kernel_len {
        1
    } else {
        (num_samples - kernel_len).div_ceil(stride) + 1
    }
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

fn relu_mask(grad: &mut Array2<f64>, pre: &Array2<f64>) {
    grad.zip_mut_with(pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0
        }
    });
}

fn affine(input: &Array2<f64>, weight: &Array2<f64>, bias: &ndarray::Array1<f64>) -> Array2<f64> {
    let mut out = input.dot(&weight.t());
    out += bias;
    out
}

/// Runs the network on one signal. Returns the `M` raw (pre-consistency)
/// outputs, each `num_samples` long, plus the trace for backprop.
pub(crate) fn forward(
    params: &SeparatorParams,
    config: &SeparatorConfig,
    input: &[f64],
) -> (Vec<Vec<f64>>, Trace) {
    let (n, l, stride, m) = (
        config.num_filters,
        config.kernel_len,
        config.stride,
        config.num_outputs,
    );
    let t = input.len();
    let f = num_frames(t, l, stride);
    let padded = (f - 1) * stride + l;

    let frames = Array2::from_shape_fn((f, l), |(fi, k)| {
        let idx = fi * stride + k;
        if idx < t {
            input[idx]
        } else {
            0.0
        }
    });
    let pre_encoding = frames.dot(&params.encoder.t());
    let representation = relu(&pre_encoding);

    let (output_layer, hidden_layers) = params.masker.split_last().expect("output layer");
    let mut hidden = Vec::with_capacity(hidden_layers.len());
    let mut h = representation.clone();
    for layer in hidden_layers {
        let z = affine(&h, &layer.weight, &layer.bias);
        h = relu(&z);
        hidden.push((z, h.clone()));
    }
    let logits = affine(&h, &output_layer.weight, &output_layer.bias);
    let masks = match config.mask_activation {
        MaskActivation::Sigmoid => logits.mapv(|v| 1.0 / (1.0 + (-v).exp())),
        MaskActivation::Relu => relu(&logits),
    };

    let mut outputs = Vec::with_capacity(m);
    for src in 0..m {
        let masked = &masks.slice(s![.., src * n..(src + 1) * n]) * &representation;
        let decoded = masked.dot(&params.decoder);
        let mut signal = vec![0.0; padded];
        for (fi, row) in decoded.outer_iter().enumerate() {
            let start = fi * stride;
            for (o, v) in signal[start..start + l].iter_mut().zip(row.iter()) {
                *o += v;
            }
        }
        signal.truncate(t);
        outputs.push(signal);
    }

    let trace = Trace {
        num_samples: t,
        frames,
        pre_encoding,
        representation,
        hidden,
        logits,
        masks,
    };
    (outputs, trace)
}

/// Accumulates into `grads` the parameter gradient given `output_grads`, the
/// loss gradient with respect to each raw output signal.
pub(crate) fn backward(
    params: &SeparatorParams,
    config: &SeparatorConfig,
    trace: &Trace,
    output_grads: &[Vec<f64>],
    grads: &mut SeparatorParams,
) {
    let (n, l, stride, m) = (
        config.num_filters,
        config.kernel_len,
        config.stride,
        config.num_outputs,
    );
    let f = trace.frames.nrows();
    let t = trace.num_samples;

    let mut d_masks = Array2::<f64>::zeros(trace.masks.raw_dim());
    let mut d_rep = Array2::<f64>::zeros(trace.representation.raw_dim());
    for (src, g) in output_grads.iter().enumerate().take(m) {
        // Overlap-add is the adjoint of framing.
        let d_decoded = Array2::from_shape_fn((f, l), |(fi, k)| {
            let idx = fi * stride + k;
            if idx < t {
                g[idx]
            } else {
                0.0
            }
        });
        let mask = trace.masks.slice(s![.., src * n..(src + 1) * n]);
        let masked = &mask * &trace.representation;
        grads.decoder += &masked.t().dot(&d_decoded);
        let d_masked = d_decoded.dot(&params.decoder.t());
        d_masks
            .slice_mut(s![.., src * n..(src + 1) * n])
            .assign(&(&d_masked * &trace.representation));
        d_rep += &(&d_masked * &mask);
    }

    let mut d_logits = d_masks;
    match config.mask_activation {
        MaskActivation::Sigmoid => {
            d_logits.zip_mut_with(&trace.masks, |g, &s| *g *= s * (1.0 - s));
        }
        MaskActivation::Relu => relu_mask(&mut d_logits, &trace.logits),
    }

    let layers = params.masker.len();
    let mut d_out = d_logits;
    for idx in (0..layers).rev() {
        let input: ArrayView2<f64> = if idx == 0 {
            trace.representation.view()
        } else {
            trace.hidden[idx - 1].1.view()
        };
        grads.masker[idx].weight += &d_out.t().dot(&input);
        grads.masker[idx].bias += &d_out.sum_axis(Axis(0));
        let mut d_in = d_out.dot(&params.masker[idx].weight);
        if idx > 0 {
            relu_mask(&mut d_in, &trace.hidden[idx - 1].0);
        }
        d_out = d_in;
    }
    d_rep += &d_out;

    relu_mask(&mut d_rep, &trace.pre_encoding);
    grads.encoder += &d_rep.t().dot(&trace.frames);
}
