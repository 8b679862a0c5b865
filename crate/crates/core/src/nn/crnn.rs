//! Bidirectional convolutional-recurrent layer.
//!
//! For frame `t` the forward stream computes
//! `h_t = relu(W_in * x_t + W_h * h_{t-1} + W_it * h_iter_t + b)` and the
//! backward stream the same with `h_{t+1}`, using one set of weights for
//! both directions. The layer output is the sum of both streams; it also
//! serves as `h_iter` for the same layer in the next cascade.

use crate::error::Result;
use crate::nn::graph::{Graph, Var};
use crate::nn::tensor::Tensor4;

/// Tape handles for one layer's weights.
#[derive(Clone, Copy, Debug)]
pub struct CrnnLayerVars {
    pub input: Var,
    pub hidden: Var,
    /// Weights on the previous cascade's hidden state; `None` disables it.
    pub iteration: Option<Var>,
    pub bias: Var,
}

/// Records one bidirectional layer on the tape. `x` is `[t][c_in][h][w]`;
/// the result is `[t][c_hidden][h][w]`.
pub fn bidir_layer(
    g: &mut Graph,
    x: Var,
    layer: &CrnnLayerVars,
    hidden_iter: Option<Var>,
    dilation: usize,
) -> Result<Var> {
    let t_frames = g.value(x).dims()[0];
    let mut drive = g.conv2d(x, layer.input, Some(layer.bias), dilation)?;
    if let (Some(w_it), Some(h_it)) = (layer.iteration, hidden_iter) {
        let r = g.conv2d(h_it, w_it, None, dilation)?;
        drive = g.add(drive, r)?;
    }
    let drives: Vec<Var> = (0..t_frames)
        .map(|t| g.slice_n(drive, t))
        .collect::<Result<_>>()?;

    let mut fwd: Vec<Var> = Vec::with_capacity(t_frames);
    for (t, &d) in drives.iter().enumerate() {
        let pre = match t {
            0 => d,
            _ => {
                let r = g.conv2d(fwd[t - 1], layer.hidden, None, dilation)?;
                g.add(d, r)?
            }
        };
        fwd.push(g.relu(pre));
    }
    let mut bwd: Vec<Option<Var>> = vec![None; t_frames];
    for t in (0..t_frames).rev() {
        let pre = match bwd.get(t + 1).copied().flatten() {
            None => drives[t],
            Some(next) => {
                let r = g.conv2d(next, layer.hidden, None, dilation)?;
                g.add(drives[t], r)?
            }
        };
        bwd[t] = Some(g.relu(pre));
    }
    let bwd: Vec<Var> = bwd.into_iter().map(|v| v.expect("filled above")).collect();
    let f = g.stack_n(&fwd)?;
    let b = g.stack_n(&bwd)?;
    g.add(f, b)
}

/// Plain-tensor weights for [`crnn_bidir_layer`].
#[derive(Clone, Debug)]
pub struct CrnnLayerWeights {
    pub input: Tensor4,
    pub hidden: Tensor4,
    pub iteration: Option<Tensor4>,
    pub bias: Tensor4,
}

/// Evaluates one layer without keeping a tape. Returns the output sequence
/// and the hidden state to carry into the next cascade (the same values).
pub fn crnn_bidir_layer(
    seq: &Tensor4,
    weights: &CrnnLayerWeights,
    hidden_prev_iter: Option<&Tensor4>,
    dilation: usize,
) -> Result<(Tensor4, Tensor4)> {
    let mut g = Graph::new();
    let x = g.constant(seq.clone());
    let vars = CrnnLayerVars {
        input: g.constant(weights.input.clone()),
        hidden: g.constant(weights.hidden.clone()),
        iteration: weights.iteration.clone().map(|w| g.constant(w)),
        bias: g.constant(weights.bias.clone()),
    };
    let h = hidden_prev_iter.map(|h| g.constant(h.clone()));
    let out = bidir_layer(&mut g, x, &vars, h, dilation)?;
    let value = g.value(out).clone();
    Ok((value.clone(), value))
}
