//! Moving vertical-bar stimuli and the change-of-log-illumination DVS pixel
//! emulator that stands in for the physical sensor + monitor rig.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::events::{DvsEvent, EventStream, POLARITY_OFF, POLARITY_ON};

/// Number of stimulus classes: bar counts 2, 4, 8, 16, 32, 64, 128.
pub const NUM_CLASSES: usize = 7;

#[derive(Debug, Error, PartialEq)]
pub enum StimulusError {
    #[error("num_bars {num_bars} must divide width {width} exactly")]
    BarCount { num_bars: u32, width: u16 },
    #[error("luminance levels invalid: white {white} must exceed black {black} > 0")]
    Levels { white: f64, black: f64 },
    #[error("frame index {frame_idx} out of range, stimulus has {num_frames} frames")]
    FrameOutOfRange { frame_idx: u32, num_frames: u32 },
    #[error("class label {label} out of range 0..={max}")]
    LabelOutOfRange { label: usize, max: usize },
    #[error("contrast threshold must be positive, got {0}")]
    Threshold(f64),
}

/// A pattern of equally wide black and white vertical bars that shifts
/// horizontally by a fixed pixel displacement every frame, wrapping.
#[derive(Debug, Clone, PartialEq)]
pub struct BarStimulus {
    pub num_bars: u32,
    pub width: u16,
    pub height: u16,
    pub displacement_px_per_frame: u32,
    pub num_frames: u32,
    pub frame_period_us: u64,
    pub white_level: f64,
    pub black_level: f64,
}

impl BarStimulus {
    pub fn new(num_bars: u32, cfg: &RecordingConfig) -> Result<Self, StimulusError> {
        let stim = Self {
            num_bars,
            width: cfg.width,
            height: cfg.height,
            displacement_px_per_frame: cfg.displacement_px_per_frame,
            num_frames: cfg.num_frames,
            frame_period_us: cfg.frame_period_us,
            white_level: cfg.white_level,
            black_level: cfg.black_level,
        };
        stim.check()?;
        Ok(stim)
    }

    fn check(&self) -> Result<(), StimulusError> {
        if self.num_bars == 0 || u32::from(self.width) % self.num_bars != 0 {
            return Err(StimulusError::BarCount { num_bars: self.num_bars, width: self.width });
        }
        if !(self.black_level > 0.0 && self.white_level > self.black_level) {
            return Err(StimulusError::Levels { white: self.white_level, black: self.black_level });
        }
        Ok(())
    }

    pub fn bar_width(&self) -> u32 {
        u32::from(self.width) / self.num_bars
    }
}

/// Positive per-pixel luminance in relative units, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LuminanceGrid {
    pub width: u16,
    pub height: u16,
    pub values: Vec<f64>,
}

impl LuminanceGrid {
    pub fn get(&self, x: u16, y: u16) -> f64 {
        self.values[usize::from(y) * usize::from(self.width) + usize::from(x)]
    }
}

/// Contrast threshold and stochastic options of the emulated pixel front end.
#[derive(Debug, Clone, PartialEq)]
pub struct DvsEmulatorConfig {
    /// Contrast threshold on |delta log luminance|, > 0.
    pub threshold_log: f64,
    /// Seed for the background-noise generator; unused when noise is off.
    pub seed: u64,
    /// Background noise in events per pixel per second. Zero disables noise.
    pub noise_rate_hz: f64,
}

impl Default for DvsEmulatorConfig {
    fn default() -> Self {
        Self { threshold_log: 0.3, seed: 0, noise_rate_hz: 0.0 }
    }
}

/// Stimulus geometry and emulator settings for one labeled recording.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingConfig {
    pub width: u16,
    pub height: u16,
    pub displacement_px_per_frame: u32,
    pub num_frames: u32,
    pub frame_period_us: u64,
    pub white_level: f64,
    pub black_level: f64,
    pub emulator: DvsEmulatorConfig,
}

impl Default for RecordingConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            displacement_px_per_frame: 2,
            num_frames: 100,
            frame_period_us: 10_000,
            white_level: 1.0,
            black_level: 0.1,
            emulator: DvsEmulatorConfig::default(),
        }
    }
}

/// Renders one frame of the bar pattern. A pixel is white iff
/// floor(((x + frame_idx * displacement) mod width) / bar_width) is even;
/// every row is identical.
pub fn render_frame(stim: &BarStimulus, frame_idx: u32) -> Result<LuminanceGrid, StimulusError> {
    if frame_idx >= stim.num_frames {
        return Err(StimulusError::FrameOutOfRange { frame_idx, num_frames: stim.num_frames });
    }
    let w = u32::from(stim.width);
    let bar_width = stim.bar_width();
    let offset = frame_idx.wrapping_mul(stim.displacement_px_per_frame);
    let row: Vec<f64> = (0..w)
        .map(|x| {
            let cell = ((x + offset) % w) / bar_width;
            if cell % 2 == 0 {
                stim.white_level
            } else {
                stim.black_level
            }
        })
        .collect();
    let mut values = Vec::with_capacity(usize::from(stim.width) * usize::from(stim.height));
    for _ in 0..stim.height {
        values.extend_from_slice(&row);
    }
    Ok(LuminanceGrid { width: stim.width, height: stim.height, values })
}

/// Runs the pixel emulation over an explicit grid sequence. Frame k is stamped
/// k * frame_period_us; frame 0 only initializes per-pixel references.
///
/// Per pixel and frame: d = log(L_k) - ref, emit floor(|d| / threshold) events
/// of polarity sign(d), then advance the reference by the emitted quanta.
/// Within a frame, events are ordered by flat pixel index.
pub fn emulate_grids(
    grids: &[LuminanceGrid],
    frame_period_us: u64,
    cfg: &DvsEmulatorConfig,
) -> Result<EventStream, StimulusError> {
    if cfg.threshold_log <= 0.0 {
        return Err(StimulusError::Threshold(cfg.threshold_log));
    }
    let Some(first) = grids.first() else {
        return Ok(EventStream::empty_default());
    };
    let (width, height) = (first.width, first.height);
    let mut stream = EventStream::new(width, height);
    let mut reference: Vec<f64> = first.values.iter().map(|v| v.ln()).collect();

    let noise = if cfg.noise_rate_hz > 0.0 {
        let lambda = cfg.noise_rate_hz * frame_period_us as f64 * 1e-6;
        Some((ChaCha8Rng::seed_from_u64(cfg.seed), Poisson::new(lambda).expect("lambda > 0")))
    } else {
        None
    };
    let mut noise = noise;

    for (k, grid) in grids.iter().enumerate().skip(1) {
        let t_us = k as u64 * frame_period_us;
        let mut flat = 0usize;
        for y in 0..height {
            for x in 0..width {
                let d = grid.values[flat].ln() - reference[flat];
                let n = (d.abs() / cfg.threshold_log).floor() as u64;
                if n > 0 {
                    let polarity = if d > 0.0 { POLARITY_ON } else { POLARITY_OFF };
                    for _ in 0..n {
                        stream.events.push(DvsEvent::new(t_us, x, y, polarity));
                    }
                    reference[flat] += f64::from(polarity) * n as f64 * cfg.threshold_log;
                }
                if let Some((rng, poisson)) = noise.as_mut() {
                    let count = poisson.sample(rng) as u64;
                    for _ in 0..count {
                        let polarity = if rng.random_bool(0.5) { POLARITY_ON } else { POLARITY_OFF };
                        stream.events.push(DvsEvent::new(t_us, x, y, polarity));
                    }
                }
                flat += 1;
            }
        }
    }
    Ok(stream)
}

/// Emulates the DVS response to a moving-bar stimulus.
pub fn dvs_emulate(stim: &BarStimulus, cfg: &DvsEmulatorConfig) -> Result<EventStream, StimulusError> {
    stim.check()?;
    let grids: Vec<LuminanceGrid> =
        (0..stim.num_frames).map(|k| render_frame(stim, k)).collect::<Result<_, _>>()?;
    emulate_grids(&grids, stim.frame_period_us, cfg)
}

/// Bar count for a class label: 2^(label + 1), so labels 0..=6 map to
/// 2, 4, 8, 16, 32, 64, 128 bars.
pub fn num_bars_for_label(label_idx: usize) -> Result<u32, StimulusError> {
    if label_idx >= NUM_CLASSES {
        return Err(StimulusError::LabelOutOfRange { label: label_idx, max: NUM_CLASSES - 1 });
    }
    Ok(2u32 << label_idx)
}

/// Deterministic labeled recording for one stimulus class.
pub fn generate_recording(
    label_idx: usize,
    cfg: &RecordingConfig,
) -> Result<(EventStream, u8), StimulusError> {
    let num_bars = num_bars_for_label(label_idx)?;
    let stim = BarStimulus::new(num_bars, cfg)?;
    let stream = dvs_emulate(&stim, &cfg.emulator)?;
    Ok((stream, label_idx as u8))
}
