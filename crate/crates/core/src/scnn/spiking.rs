//! True spiking inference: hidden LIF neurons with reset and refractory hold,
//! a non-spiking integrator output layer, prediction by the highest
//! accumulated voltage after 60 timesteps.

use ndarray::Array2;

use super::rate::{forward_rate, softmax};
use super::train::input_for;
use super::{ConvLayer, LifParams, ScnnError, ScnnParams};
use crate::framing::{Dataset, Split};
use crate::stimulus::NUM_CLASSES;

/// Simulation horizon; with dt = 1 ms this is the paper's 60 ms window.
pub const INFERENCE_STEPS: usize = 60;

/// Output-voltage trajectory of one spiking run.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceTrace {
    /// One 7-vector of output voltages per timestep.
    pub voltages: Vec<[f64; NUM_CLASSES]>,
    /// Argmax of the final voltages, lowest index on ties.
    pub predicted: usize,
}

/// Per-layer membrane state.
struct LifLayerState {
    v: Vec<f64>,
    refractory: Vec<u32>,
}

impl LifLayerState {
    fn new(len: usize) -> Self {
        Self { v: vec![0.0; len], refractory: vec![0; len] }
    }

    /// Advances one Euler step under input current `j`; writes spike outputs
    /// (amplitude / dt at firing neurons, 0 elsewhere) into `out`.
    fn step(&mut self, j: &[f64], lif: &LifParams, refractory_steps: u32, out: &mut [f64]) {
        let leak = lif.dt / lif.tau_rc;
        let spike_value = lif.amplitude / lif.dt;
        for i in 0..self.v.len() {
            if self.refractory[i] > 0 {
                self.refractory[i] -= 1;
                out[i] = 0.0;
                continue;
            }
            self.v[i] += leak * (j[i] - self.v[i]);
            if self.v[i] >= lif.v_th {
                out[i] = spike_value;
                self.v[i] = 0.0;
                self.refractory[i] = refractory_steps;
            } else {
                out[i] = 0.0;
            }
        }
    }
}

fn conv_forward_into(input: &[f64], side: usize, layer: &ConvLayer, out: &mut [f64]) {
    // Same arithmetic as the rate path; factored privately there, repeated
    // here on raw slices to keep the hot loop free of shape plumbing.
    let plane = side * side;
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

fn avgpool2_into(input: &[f64], channels: usize, side: usize, out: &mut [f64]) {
    let half = side / 2;
    for c in 0..channels {
        let in_plane = &input[c * side * side..(c + 1) * side * side];
        let out_plane = &mut out[c * half * half..(c + 1) * half * half];
        for y in 0..half {
            for x in 0..half {
                let base = 2 * y * side + 2 * x;
                out_plane[y * half + x] = 0.25
                    * (in_plane[base] + in_plane[base + 1] + in_plane[base + side] + in_plane[base + side + 1]);
            }
        }
    }
}

/// Runs the spiking network on one frame presented as constant input current.
/// Hidden conv layers spike with reset-to-zero and a tau_ref refractory hold;
/// the output layer integrates its weighted input without spiking, scaled by
/// dt / tau_rc per step, so its voltage accumulates over the simulation.
pub fn spiking_infer(
    params: &ScnnParams,
    lif: &LifParams,
    frame: &Array2<f64>,
) -> Result<InferenceTrace, ScnnError> {
    lif.check()?;
    let side = params.geometry.input_side;
    if frame.dim() != (side, side) {
        return Err(ScnnError::ShapeMismatch { got_h: frame.dim().0, got_w: frame.dim().1, side });
    }
    let refractory_steps = (lif.tau_ref / lif.dt).round() as u32;

    let input: Vec<f64> = frame.iter().cloned().collect();
    let (s1, s2, s3) = (side, side / 2, side / 4);

    // The frame is constant, so the first layer's drive never changes.
    let mut z1 = vec![0.0; params.conv1.out_ch * s1 * s1];
    conv_forward_into(&input, s1, &params.conv1, &mut z1);

    let mut layer1 = LifLayerState::new(z1.len());
    let mut layer2 = LifLayerState::new(params.conv2.out_ch * s2 * s2);
    let mut layer3 = LifLayerState::new(params.conv3.out_ch * s3 * s3);

    let mut spikes1 = vec![0.0; layer1.v.len()];
    let mut pooled1 = vec![0.0; params.conv1.out_ch * s2 * s2];
    let mut z2 = vec![0.0; layer2.v.len()];
    let mut spikes2 = vec![0.0; layer2.v.len()];
    let mut pooled2 = vec![0.0; params.conv2.out_ch * s3 * s3];
    let mut z3 = vec![0.0; layer3.v.len()];
    let mut spikes3 = vec![0.0; layer3.v.len()];
    let mut pooled3 = vec![0.0; params.geometry.flatten_len()];

    let mut output_v = [0.0f64; NUM_CLASSES];
    let mut voltages = Vec::with_capacity(INFERENCE_STEPS);
    let integrate = lif.dt / lif.tau_rc;

    for _ in 0..INFERENCE_STEPS {
        layer1.step(&z1, lif, refractory_steps, &mut spikes1);
        avgpool2_into(&spikes1, params.conv1.out_ch, s1, &mut pooled1);

        conv_forward_into(&pooled1, s2, &params.conv2, &mut z2);
        layer2.step(&z2, lif, refractory_steps, &mut spikes2);
        avgpool2_into(&spikes2, params.conv2.out_ch, s2, &mut pooled2);

        conv_forward_into(&pooled2, s3, &params.conv3, &mut z3);
        layer3.step(&z3, lif, refractory_steps, &mut spikes3);
        avgpool2_into(&spikes3, params.conv3.out_ch, s3, &mut pooled3);

        for k in 0..NUM_CLASSES {
            let row = &params.dense.weights[k * params.dense.input..(k + 1) * params.dense.input];
            let drive: f64 =
                params.dense.bias[k] + row.iter().zip(&pooled3).map(|(w, v)| w * v).sum::<f64>();
            output_v[k] += integrate * drive;
        }
        voltages.push(output_v);
    }

    let mut predicted = 0;
    for k in 1..NUM_CLASSES {
        if output_v[k] > output_v[predicted] {
            predicted = k;
        }
    }
    Ok(InferenceTrace { voltages, predicted })
}

/// Spiking accuracy (percent) and 7x7 confusion matrix (rows = true class)
/// over one dataset split.
pub fn evaluate(
    params: &ScnnParams,
    lif: &LifParams,
    dataset: &Dataset,
    split: Split,
) -> Result<(f64, [[u32; NUM_CLASSES]; NUM_CLASSES]), ScnnError> {
    let indices = dataset.indices_of(split);
    if indices.is_empty() {
        return Err(ScnnError::EmptySplit);
    }
    let side = params.geometry.input_side;
    let mut confusion = [[0u32; NUM_CLASSES]; NUM_CLASSES];
    let mut correct = 0u64;
    for idx in indices.iter() {
        let frame = input_for(dataset, *idx, side)?;
        let trace = spiking_infer(params, lif, &frame)?;
        let truth = usize::from(dataset.labels[*idx]);
        confusion[truth][trace.predicted] += 1;
        if trace.predicted == truth {
            correct += 1;
        }
    }
    let accuracy = 100.0 * correct as f64 / indices.len() as f64;
    Ok((accuracy, confusion))
}

/// Empirical firing rate (Hz) of a single LIF neuron driven by a constant
/// current for `steps` Euler steps; the spiking-side half of the rate
/// consistency checks.
pub fn simulate_lif_rate(input_current: f64, lif: &LifParams, steps: usize) -> f64 {
    let refractory_steps = (lif.tau_ref / lif.dt).round() as u32;
    let mut state = LifLayerState::new(1);
    let mut out = [0.0];
    let j = [input_current];
    let mut spikes = 0u64;
    for _ in 0..steps {
        state.step(&j, lif, refractory_steps, &mut out);
        if out[0] > 0.0 {
            spikes += 1;
        }
    }
    spikes as f64 / (steps as f64 * lif.dt)
}

/// Rate-mode argmax predictions for the same frames, for agreement checks
/// between the surrogate and the spiking model.
pub fn rate_predictions(
    params: &ScnnParams,
    lif: &LifParams,
    dataset: &Dataset,
    split: Split,
) -> Result<Vec<usize>, ScnnError> {
    let side = params.geometry.input_side;
    let mut out = Vec::new();
    for idx in dataset.indices_of(split) {
        let frame = input_for(dataset, idx, side)?;
        let scores = forward_rate(params, lif, &[frame])?;
        let probs = softmax(scores.row(0).as_slice().unwrap());
        let mut best = 0;
        for k in 1..NUM_CLASSES {
            if probs[k] > probs[best] {
                best = k;
            }
        }
        out.push(best);
    }
    Ok(out)
}
