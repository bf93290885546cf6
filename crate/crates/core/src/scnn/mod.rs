//! Spiking convolutional classifier: three conv + average-pool blocks of LIF
//! neurons and a dense head. Training runs a differentiable soft-LIF rate
//! approximation for a single timestep; inference runs true spiking dynamics
//! for 60 timesteps and predicts by the highest accumulated output voltage.

mod checkpoint;
mod rate;
mod spiking;
mod train;

use std::io;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, SCN_MAGIC};
pub use rate::{forward_rate, nll_loss, soft_lif_rate, soft_lif_rate_deriv, softmax, softplus};
pub use spiking::{
    evaluate, rate_predictions, simulate_lif_rate, spiking_infer, InferenceTrace, INFERENCE_STEPS,
};
pub use train::{loss_and_gradients, train, TrainReport};

use crate::stimulus::NUM_CLASSES;

/// Filter counts of the three conv blocks.
pub const CONV_CHANNELS: [usize; 3] = [8, 16, 32];
/// Side length of every conv filter.
pub const CONV_KERNEL: usize = 3;

#[derive(Debug, Error)]
pub enum ScnnError {
    #[error("input frame is {got_h}x{got_w}, network expects {side}x{side}")]
    ShapeMismatch { got_h: usize, got_w: usize, side: usize },
    #[error("frame side {frame} cannot feed a network of side {net}; sides must be equal or an integer multiple")]
    IncompatibleFrames { frame: usize, net: usize },
    #[error("network input side {0} must be a positive multiple of 8")]
    BadGeometry(usize),
    #[error("requested split contains no frames")]
    EmptySplit,
    #[error("invalid LIF parameters: {0}")]
    BadLif(String),
    #[error("checkpoint invalid: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// LIF neuron constants shared by the rate approximation and the spiking
/// simulation. Times are in seconds; v_th is normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifParams {
    pub tau_rc: f64,
    pub tau_ref: f64,
    pub v_th: f64,
    /// Smoothing width of the soft threshold used during training.
    pub gamma: f64,
    pub dt: f64,
    /// Spike output scale; a rate-mode activation is amplitude * rate.
    pub amplitude: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self { tau_rc: 0.020, tau_ref: 0.002, v_th: 1.0, gamma: 1.0, dt: 0.001, amplitude: 1.0 }
    }
}

impl LifParams {
    pub fn check(&self) -> Result<(), ScnnError> {
        let all_positive = self.tau_rc > 0.0
            && self.tau_ref > 0.0
            && self.v_th > 0.0
            && self.gamma > 0.0
            && self.dt > 0.0
            && self.amplitude > 0.0;
        if !all_positive {
            return Err(ScnnError::BadLif("all parameters must be positive".into()));
        }
        if self.dt >= self.tau_ref {
            return Err(ScnnError::BadLif(format!(
                "dt {} must be below tau_ref {}",
                self.dt, self.tau_ref
            )));
        }
        Ok(())
    }
}

/// Network input side. The three 2x2 pools divide it by 8, so it must be a
/// positive multiple of 8: 128 for the full sensor, 32 for the reduced
/// desk-scale build, smaller multiples for oracle tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub input_side: usize,
}

impl Geometry {
    pub const FULL: Geometry = Geometry { input_side: 128 };
    pub const REDUCED: Geometry = Geometry { input_side: 32 };

    pub fn new(input_side: usize) -> Result<Self, ScnnError> {
        if input_side == 0 || input_side % 8 != 0 {
            return Err(ScnnError::BadGeometry(input_side));
        }
        Ok(Self { input_side })
    }

    /// Flattened length after the third pool: 32 * (side/8)^2; 8192 at full size.
    pub fn flatten_len(self) -> usize {
        let s = self.input_side / 8;
        CONV_CHANNELS[2] * s * s
    }
}

/// One 3x3 same-padding convolution layer; weights laid out [out][in][row][col].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub out_ch: usize,
    pub in_ch: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    fn init(out_ch: usize, in_ch: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = in_ch * CONV_KERNEL * CONV_KERNEL;
        let scale = 1.0 / (fan_in as f64).sqrt();
        let weights =
            (0..out_ch * fan_in).map(|_| rng.random_range(-scale..scale)).collect();
        Self { out_ch, in_ch, weights, bias: vec![0.0; out_ch] }
    }
}

/// Fully connected head; weights laid out [class][input].
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub out: usize,
    pub input: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn init(out: usize, input: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = 1.0 / (input as f64).sqrt();
        let weights = (0..out * input).map(|_| rng.random_range(-scale..scale)).collect();
        Self { out, input, weights, bias: vec![0.0; out] }
    }
}

/// All trainable parameters of the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ScnnParams {
    pub geometry: Geometry,
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
    pub conv3: ConvLayer,
    pub dense: DenseLayer,
}

impl ScnnParams {
    /// Seeded initialization: centered uniform weights scaled by 1/sqrt(fan_in),
    /// zero biases.
    pub fn init(geometry: Geometry, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conv1 = ConvLayer::init(CONV_CHANNELS[0], 1, &mut rng);
        let conv2 = ConvLayer::init(CONV_CHANNELS[1], CONV_CHANNELS[0], &mut rng);
        let conv3 = ConvLayer::init(CONV_CHANNELS[2], CONV_CHANNELS[1], &mut rng);
        let dense = DenseLayer::init(NUM_CLASSES, geometry.flatten_len(), &mut rng);
        Self { geometry, conv1, conv2, conv3, dense }
    }

    pub fn param_count(&self) -> usize {
        self.conv1.weights.len()
            + self.conv1.bias.len()
            + self.conv2.weights.len()
            + self.conv2.bias.len()
            + self.conv3.weights.len()
            + self.conv3.bias.len()
            + self.dense.weights.len()
            + self.dense.bias.len()
    }

    fn flat_parts(&mut self) -> [&mut Vec<f64>; 8] {
        [
            &mut self.conv1.weights,
            &mut self.conv1.bias,
            &mut self.conv2.weights,
            &mut self.conv2.bias,
            &mut self.conv3.weights,
            &mut self.conv3.bias,
            &mut self.dense.weights,
            &mut self.dense.bias,
        ]
    }

    /// Reads one parameter by its flat index across all layers in declaration
    /// order; used by the finite-difference gradient checks.
    pub fn get_flat(&mut self, mut index: usize) -> f64 {
        for part in self.flat_parts() {
            if index < part.len() {
                return part[index];
            }
            index -= part.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn set_flat(&mut self, mut index: usize, value: f64) {
        for part in self.flat_parts() {
            if index < part.len() {
                part[index] = value;
                return;
            }
            index -= part.len();
        }
        panic!("flat parameter index out of range");
    }
}

/// Gradient accumulator with the same layout as [`ScnnParams`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
    pub conv3_w: Vec<f64>,
    pub conv3_b: Vec<f64>,
    pub dense_w: Vec<f64>,
    pub dense_b: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &ScnnParams) -> Self {
        Self {
            conv1_w: vec![0.0; params.conv1.weights.len()],
            conv1_b: vec![0.0; params.conv1.bias.len()],
            conv2_w: vec![0.0; params.conv2.weights.len()],
            conv2_b: vec![0.0; params.conv2.bias.len()],
            conv3_w: vec![0.0; params.conv3.weights.len()],
            conv3_b: vec![0.0; params.conv3.bias.len()],
            dense_w: vec![0.0; params.dense.weights.len()],
            dense_b: vec![0.0; params.dense.bias.len()],
        }
    }

    pub fn get_flat(&self, mut index: usize) -> f64 {
        for part in [
            &self.conv1_w, &self.conv1_b, &self.conv2_w, &self.conv2_b, &self.conv3_w,
            &self.conv3_b, &self.dense_w, &self.dense_b,
        ] {
            if index < part.len() {
                return part[index];
            }
            index -= part.len();
        }
        panic!("flat gradient index out of range");
    }

    /// w -= lr * g across every layer.
    pub fn apply_sgd(&self, params: &mut ScnnParams, learning_rate: f64) {
        fn step(target: &mut [f64], grad: &[f64], lr: f64) {
            for (w, g) in target.iter_mut().zip(grad) {
                *w -= lr * g;
            }
        }
        step(&mut params.conv1.weights, &self.conv1_w, learning_rate);
        step(&mut params.conv1.bias, &self.conv1_b, learning_rate);
        step(&mut params.conv2.weights, &self.conv2_w, learning_rate);
        step(&mut params.conv2.bias, &self.conv2_b, learning_rate);
        step(&mut params.conv3.weights, &self.conv3_w, learning_rate);
        step(&mut params.conv3.bias, &self.conv3_b, learning_rate);
        step(&mut params.dense.weights, &self.dense_w, learning_rate);
        step(&mut params.dense.bias, &self.dense_b, learning_rate);
    }
}

/// Mini-batch SGD schedule. The paper's settings are 3 epochs of batches of
/// 20; gamma anneals from LifParams::gamma down to gamma_final across epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub gamma_final: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 3, batch_size: 20, learning_rate: 1e-3, seed: 0, gamma_final: 0.1 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_sides_and_flatten_lengths() {
        assert_eq!(Geometry::FULL.flatten_len(), 8192);
        assert_eq!(Geometry::REDUCED.flatten_len(), 512);
        assert_eq!(Geometry::new(8).unwrap().flatten_len(), 32);
        assert!(Geometry::new(12).is_err());
        assert!(Geometry::new(0).is_err());
    }

    #[test]
    fn init_is_seed_deterministic_and_within_scale() {
        let a = ScnnParams::init(Geometry::REDUCED, 9);
        let b = ScnnParams::init(Geometry::REDUCED, 9);
        assert_eq!(a, b);
        let c = ScnnParams::init(Geometry::REDUCED, 10);
        assert_ne!(a, c);
        let scale = 1.0 / 3.0; // conv1 fan_in = 9
        assert!(a.conv1.weights.iter().all(|w| w.abs() < scale));
        assert!(a.conv1.bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn table_shapes_at_full_geometry() {
        let p = ScnnParams::init(Geometry::FULL, 0);
        assert_eq!((p.conv1.out_ch, p.conv1.in_ch), (8, 1));
        assert_eq!((p.conv2.out_ch, p.conv2.in_ch), (16, 8));
        assert_eq!((p.conv3.out_ch, p.conv3.in_ch), (32, 16));
        assert_eq!((p.dense.out, p.dense.input), (7, 8192));
        assert_eq!(
            p.param_count(),
            8 * 9 + 8 + 16 * 8 * 9 + 16 + 32 * 16 * 9 + 32 + 7 * 8192 + 7
        );
    }

    #[test]
    fn flat_parameter_access_covers_every_layer() {
        let mut p = ScnnParams::init(Geometry::new(8).unwrap(), 1);
        let n = p.param_count();
        p.set_flat(0, 5.0);
        assert_eq!(p.conv1.weights[0], 5.0);
        p.set_flat(n - 1, -2.0);
        assert_eq!(*p.dense.bias.last().unwrap(), -2.0);
    }

    #[test]
    fn lif_validation_rejects_bad_dt() {
        let mut lif = LifParams::default();
        assert!(lif.check().is_ok());
        lif.dt = 0.002;
        assert!(lif.check().is_err());
        lif.dt = 0.001;
        lif.tau_rc = -1.0;
        assert!(lif.check().is_err());
    }
}
