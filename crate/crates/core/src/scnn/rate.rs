//! Differentiable rate-mode path: soft-LIF response curve, the conv/pool
//! stack, softmax, NLL, and the hand-rolled backward pass.

use ndarray::{Array2, ArrayView2};

use super::{ConvLayer, Gradients, LifParams, ScnnError, ScnnParams};
use crate::stimulus::NUM_CLASSES;

/// Numerically stable gamma * ln(1 + exp(x / gamma)).
pub fn softplus(x: f64, gamma: f64) -> f64 {
    let t = x / gamma;
    if t > 30.0 {
        x + gamma * (-t).exp()
    } else if t < -30.0 {
        gamma * t.exp()
    } else {
        gamma * t.exp().ln_1p()
    }
}

/// Soft-LIF steady-state response: amplitude / (tau_ref + tau_rc *
/// ln(1 + v_th / rho(j - v_th))) with rho the softplus above. Smoothly
/// approaches the hard LIF rate as gamma shrinks and 0 as j falls below
/// threshold; total and continuously differentiable.
pub fn soft_lif_rate(input_current: f64, p: &LifParams) -> f64 {
    let rho = softplus(input_current - p.v_th, p.gamma);
    if rho <= 0.0 {
        return 0.0;
    }
    let denom = p.tau_ref + p.tau_rc * (p.v_th / rho).ln_1p();
    p.amplitude / denom
}

/// Analytic derivative of [`soft_lif_rate`] with respect to the input current.
pub fn soft_lif_rate_deriv(input_current: f64, p: &LifParams) -> f64 {
    let x = input_current - p.v_th;
    let rho = softplus(x, p.gamma);
    if rho <= 0.0 {
        return 0.0;
    }
    let denom = p.tau_ref + p.tau_rc * (p.v_th / rho).ln_1p();
    let logistic = 1.0 / (1.0 + (-x / p.gamma).exp());
    p.amplitude * p.tau_rc * p.v_th * logistic / (denom * denom * rho * (rho + p.v_th))
}

/// Max-subtracted softmax over one score vector.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let peak = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - peak).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Mean negative log likelihood of the true labels; probabilities are clamped
/// at 1e-12 before the log.
pub fn nll_loss(probs: &[Vec<f64>], labels: &[u8]) -> f64 {
    assert_eq!(probs.len(), labels.len());
    assert!(!probs.is_empty());
    let sum: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, &label)| p[usize::from(label)].max(1e-12).ln())
        .sum();
    -sum / probs.len() as f64
}

/// z[o,y,x] = bias[o] + sum over c,r,s of w[o,c,r,s] * in[c, y+r-1, x+s-1],
/// with out-of-range taps contributing zero (same padding, stride 1).
fn conv3x3_forward(input: &[f64], side: usize, layer: &ConvLayer, out: &mut [f64]) {
    let plane = side * side;
    debug_assert_eq!(input.len(), layer.in_ch * plane);
    debug_assert_eq!(out.len(), layer.out_ch * plane);
    for o in 0..layer.out_ch {
        let z_plane = &mut out[o * plane..(o + 1) * plane];
        z_plane.fill(layer.bias[o]);
        for c in 0..layer.in_ch {
            let in_plane = &input[c * plane..(c + 1) * plane];
            let w_base = (o * layer.in_ch + c) * 9;
            for r in 0..3usize {
                let dy = r as isize - 1;
                for s in 0..3usize {
                    let dx = s as isize - 1;
                    let w = layer.weights[w_base + r * 3 + s];
                    let (y0, y1) = ((-dy).max(0) as usize, (side as isize - dy.max(0)) as usize);
                    let (x0, x1) = ((-dx).max(0) as usize, (side as isize - dx.max(0)) as usize);
                    for y in y0..y1 {
                        let src_row = ((y as isize + dy) as usize) * side;
                        let dst_row = y * side;
                        for x in x0..x1 {
                            z_plane[dst_row + x] += w * in_plane[src_row + (x as isize + dx) as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates dW, db, and the input gradient for [`conv3x3_forward`].
fn conv3x3_backward(
    input: &[f64],
    side: usize,
    layer: &ConvLayer,
    dz: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dinput: Option<&mut [f64]>,
) {
    let plane = side * side;
    for o in 0..layer.out_ch {
        let dz_plane = &dz[o * plane..(o + 1) * plane];
        db[o] += dz_plane.iter().sum::<f64>();
    }
    let mut dinput = dinput;
    for o in 0..layer.out_ch {
        let dz_plane = &dz[o * plane..(o + 1) * plane];
        for c in 0..layer.in_ch {
            let in_plane = &input[c * plane..(c + 1) * plane];
            let w_base = (o * layer.in_ch + c) * 9;
            for r in 0..3usize {
                let dy = r as isize - 1;
                for s in 0..3usize {
                    let dx = s as isize - 1;
                    let (y0, y1) = ((-dy).max(0) as usize, (side as isize - dy.max(0)) as usize);
                    let (x0, x1) = ((-dx).max(0) as usize, (side as isize - dx.max(0)) as usize);
                    let mut grad = 0.0;
                    for y in y0..y1 {
                        let src_row = ((y as isize + dy) as usize) * side;
                        let dst_row = y * side;
                        for x in x0..x1 {
                            grad += dz_plane[dst_row + x] * in_plane[src_row + (x as isize + dx) as usize];
                        }
                    }
                    dw[w_base + r * 3 + s] += grad;
                    if let Some(di) = dinput.as_deref_mut() {
                        let di_plane = &mut di[c * plane..(c + 1) * plane];
                        let w = layer.weights[w_base + r * 3 + s];
                        for y in y0..y1 {
                            let src_row = ((y as isize + dy) as usize) * side;
                            let dst_row = y * side;
                            for x in x0..x1 {
                                di_plane[src_row + (x as isize + dx) as usize] += w * dz_plane[dst_row + x];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2x2 average pooling with stride 2 over every channel.
fn avgpool2(input: &[f64], channels: usize, side: usize, out: &mut [f64]) {
    let half = side / 2;
    for c in 0..channels {
        let in_plane = &input[c * side * side..(c + 1) * side * side];
        let out_plane = &mut out[c * half * half..(c + 1) * half * half];
        for y in 0..half {
            for x in 0..half {
                let base = 2 * y * side + 2 * x;
                out_plane[y * half + x] =
                    0.25 * (in_plane[base] + in_plane[base + 1] + in_plane[base + side] + in_plane[base + side + 1]);
            }
        }
    }
}

/// Distributes pooled gradients back to the 2x2 source cells.
fn avgpool2_backward(dout: &[f64], channels: usize, side: usize, dinput: &mut [f64]) {
    let half = side / 2;
    for c in 0..channels {
        let dout_plane = &dout[c * half * half..(c + 1) * half * half];
        let din_plane = &mut dinput[c * side * side..(c + 1) * side * side];
        for y in 0..half {
            for x in 0..half {
                let g = 0.25 * dout_plane[y * half + x];
                let base = 2 * y * side + 2 * x;
                din_plane[base] += g;
                din_plane[base + 1] += g;
                din_plane[base + side] += g;
                din_plane[base + side + 1] += g;
            }
        }
    }
}

/// Activations cached by one forward pass for the backward pass.
pub(crate) struct SampleCache {
    input: Vec<f64>,
    z1: Vec<f64>,
    p1: Vec<f64>,
    z2: Vec<f64>,
    p2: Vec<f64>,
    z3: Vec<f64>,
    p3: Vec<f64>,
    pub scores: Vec<f64>,
}

fn rate_map(z: &[f64], lif: &LifParams) -> Vec<f64> {
    z.iter().map(|&j| soft_lif_rate(j, lif)).collect()
}

/// One conv block: convolution, soft-LIF rates, 2x2 average pool.
/// Returns (pre-activation, pooled rates).
fn block_forward(
    input: &[f64],
    side: usize,
    layer: &ConvLayer,
    lif: &LifParams,
) -> (Vec<f64>, Vec<f64>) {
    let mut z = vec![0.0; layer.out_ch * side * side];
    conv3x3_forward(input, side, layer, &mut z);
    let rates = rate_map(&z, lif);
    let mut pooled = vec![0.0; layer.out_ch * (side / 2) * (side / 2)];
    avgpool2(&rates, layer.out_ch, side, &mut pooled);
    (z, pooled)
}

pub(crate) fn forward_sample(
    params: &ScnnParams,
    lif: &LifParams,
    frame: &ArrayView2<f64>,
) -> Result<SampleCache, ScnnError> {
    let side = params.geometry.input_side;
    if frame.dim() != (side, side) {
        return Err(ScnnError::ShapeMismatch { got_h: frame.dim().0, got_w: frame.dim().1, side });
    }
    let input: Vec<f64> = frame.iter().cloned().collect();
    let (z1, p1) = block_forward(&input, side, &params.conv1, lif);
    let (z2, p2) = block_forward(&p1, side / 2, &params.conv2, lif);
    let (z3, p3) = block_forward(&p2, side / 4, &params.conv3, lif);

    let mut scores = params.dense.bias.clone();
    for (k, score) in scores.iter_mut().enumerate() {
        let row = &params.dense.weights[k * params.dense.input..(k + 1) * params.dense.input];
        *score += row.iter().zip(&p3).map(|(w, v)| w * v).sum::<f64>();
    }
    Ok(SampleCache { input, z1, p1, z2, p2, z3, p3, scores })
}

/// Accumulates parameter gradients for one sample given dL/dscores.
pub(crate) fn backward_sample(
    params: &ScnnParams,
    lif: &LifParams,
    cache: &SampleCache,
    dscores: &[f64],
    grads: &mut Gradients,
) {
    let side = params.geometry.input_side;
    let dense = &params.dense;

    let mut dp3 = vec![0.0; dense.input];
    for k in 0..dense.out {
        let g = dscores[k];
        grads.dense_b[k] += g;
        let w_row = &dense.weights[k * dense.input..(k + 1) * dense.input];
        let gw_row = &mut grads.dense_w[k * dense.input..(k + 1) * dense.input];
        for i in 0..dense.input {
            gw_row[i] += g * cache.p3[i];
            dp3[i] += g * w_row[i];
        }
    }

    // Block 3 backward: pool -> soft-LIF -> conv.
    let s3 = side / 4;
    let mut da3 = vec![0.0; params.conv3.out_ch * s3 * s3];
    avgpool2_backward(&dp3, params.conv3.out_ch, s3, &mut da3);
    let dz3: Vec<f64> = da3
        .iter()
        .zip(&cache.z3)
        .map(|(&da, &z)| da * soft_lif_rate_deriv(z, lif))
        .collect();
    let mut dp2 = vec![0.0; params.conv3.in_ch * s3 * s3];
    conv3x3_backward(&cache.p2, s3, &params.conv3, &dz3, &mut grads.conv3_w, &mut grads.conv3_b, Some(&mut dp2));

    // Block 2.
    let s2 = side / 2;
    let mut da2 = vec![0.0; params.conv2.out_ch * s2 * s2];
    avgpool2_backward(&dp2, params.conv2.out_ch, s2, &mut da2);
    let dz2: Vec<f64> = da2
        .iter()
        .zip(&cache.z2)
        .map(|(&da, &z)| da * soft_lif_rate_deriv(z, lif))
        .collect();
    let mut dp1 = vec![0.0; params.conv2.in_ch * s2 * s2];
    conv3x3_backward(&cache.p1, s2, &params.conv2, &dz2, &mut grads.conv2_w, &mut grads.conv2_b, Some(&mut dp1));

    // Block 1; no input gradient needed.
    let mut da1 = vec![0.0; params.conv1.out_ch * side * side];
    avgpool2_backward(&dp1, params.conv1.out_ch, side, &mut da1);
    let dz1: Vec<f64> = da1
        .iter()
        .zip(&cache.z1)
        .map(|(&da, &z)| da * soft_lif_rate_deriv(z, lif))
        .collect();
    conv3x3_backward(&cache.input, side, &params.conv1, &dz1, &mut grads.conv1_w, &mut grads.conv1_b, None);
}

/// Rate-mode forward pass over a batch of frames; one row of raw class
/// scores per sample.
pub fn forward_rate(
    params: &ScnnParams,
    lif: &LifParams,
    batch: &[Array2<f64>],
) -> Result<Array2<f64>, ScnnError> {
    let mut scores = Array2::zeros((batch.len(), NUM_CLASSES));
    for (i, frame) in batch.iter().enumerate() {
        let cache = forward_sample(params, lif, &frame.view())?;
        for (k, &s) in cache.scores.iter().enumerate() {
            scores[(i, k)] = s;
        }
    }
    Ok(scores)
}
