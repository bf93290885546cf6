//! Event-to-frame accumulation, normalization, and labeled dataset assembly
//! with a deterministic per-class 9:1 train/test split.

use std::io::{self, BufRead, Write};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::events::EventStream;
use crate::stimulus::NUM_CLASSES;

#[derive(Debug, Error, PartialEq)]
pub enum FramingError {
    #[error("frame period must be positive")]
    ZeroFramePeriod,
    #[error("class {0} has no recordings")]
    MissingClass(u8),
    #[error("class {0} produced no frames")]
    EmptyClass(u8),
    #[error("recording dimensions {got:?} differ from dataset dimensions {expected:?}")]
    MixedDimensions { expected: (usize, usize), got: (usize, usize) },
    #[error("label {0} out of range 0..={max}", max = NUM_CLASSES - 1)]
    BadLabel(u8),
    #[error("sidecar row {0} is malformed")]
    BadSidecarRow(usize),
}

/// Dense stack of signed analog frames, row-major within a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTensor {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

impl FrameTensor {
    pub fn zeros(count: usize, height: usize, width: usize) -> Self {
        Self { count, height, width, values: vec![0.0; count * height * width] }
    }

    pub fn frame(&self, k: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.values[k * n..(k + 1) * n]
    }

    /// Frame k as an f64 matrix for numeric work.
    pub fn frame_matrix(&self, k: usize) -> Array2<f64> {
        let data: Vec<f64> = self.frame(k).iter().map(|&v| f64::from(v)).collect();
        Array2::from_shape_vec((self.height, self.width), data).expect("frame shape")
    }

    /// Largest absolute value in the tensor, 0 for an empty tensor.
    pub fn max_abs(&self) -> f32 {
        self.values.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }
}

/// Train/test membership of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Labeled frames plus the split assignment that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub frames: FrameTensor,
    pub labels: Vec<u8>,
    pub split: Vec<Split>,
    pub seed: u64,
}

impl Dataset {
    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.split[i] == split).collect()
    }
}

/// Bins events into frames of `frame_period_us`: frame k covers
/// [k*P, (k+1)*P) and holds ON count minus OFF count per pixel. The frame
/// count is ceil((t_max + 1) / P) for nonempty streams, 0 otherwise.
pub fn accumulate(stream: &EventStream, frame_period_us: u64) -> Result<FrameTensor, FramingError> {
    if frame_period_us == 0 {
        return Err(FramingError::ZeroFramePeriod);
    }
    let (height, width) = (usize::from(stream.height), usize::from(stream.width));
    let Some(t_max) = stream.events.iter().map(|e| e.t_us).max() else {
        return Ok(FrameTensor { count: 0, height, width, values: vec![] });
    };
    let count = ((t_max + 1).div_ceil(frame_period_us)) as usize;
    let mut tensor = FrameTensor::zeros(count, height, width);
    let plane = height * width;
    for e in &stream.events {
        let k = (e.t_us / frame_period_us) as usize;
        let idx = k * plane + usize::from(e.y) * width + usize::from(e.x);
        tensor.values[idx] += f32::from(e.polarity);
    }
    Ok(tensor)
}

/// Scales the whole tensor by 1 / max(1, max |value|), mapping into [-1, 1].
pub fn normalize(mut frames: FrameTensor) -> FrameTensor {
    let peak = frames.max_abs();
    if peak > 1.0 {
        let inv = 1.0 / peak;
        for v in &mut frames.values {
            *v *= inv;
        }
    }
    frames
}

/// Accumulates and normalizes every recording, concatenates the frames with
/// per-frame labels, and assigns the stratified 9:1 split: per class, frame
/// indices are shuffled by a seeded generator and the last tenth (rounded
/// down, at least one frame) goes to test.
pub fn build_dataset(
    recordings: &[(EventStream, u8)],
    frame_period_us: u64,
    seed: u64,
) -> Result<Dataset, FramingError> {
    for class in 0..NUM_CLASSES as u8 {
        if !recordings.iter().any(|(_, label)| *label == class) {
            return Err(FramingError::MissingClass(class));
        }
    }
    let mut dims: Option<(usize, usize)> = None;
    let mut frames: Option<FrameTensor> = None;
    let mut labels: Vec<u8> = Vec::new();

    for (stream, label) in recordings {
        if usize::from(*label) >= NUM_CLASSES {
            return Err(FramingError::BadLabel(*label));
        }
        let tensor = normalize(accumulate(stream, frame_period_us)?);
        let got = (tensor.height, tensor.width);
        match dims {
            None => dims = Some(got),
            Some(expected) if expected != got => {
                return Err(FramingError::MixedDimensions { expected, got })
            }
            _ => {}
        }
        labels.extend(std::iter::repeat_n(*label, tensor.count));
        match frames.as_mut() {
            None => frames = Some(tensor),
            Some(acc) => {
                acc.values.extend_from_slice(&tensor.values);
                acc.count += tensor.count;
            }
        }
    }
    let frames = frames.expect("at least 7 recordings checked above");

    let mut split = vec![Split::Train; labels.len()];
    for class in 0..NUM_CLASSES as u8 {
        let mut class_frames: Vec<usize> =
            (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if class_frames.is_empty() {
            return Err(FramingError::EmptyClass(class));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::from(class) + 1);
        class_frames.shuffle(&mut rng);
        let n_test = (class_frames.len() / 10).max(1);
        for &i in &class_frames[class_frames.len() - n_test..] {
            split[i] = Split::Test;
        }
    }
    Ok(Dataset { frames, labels, split, seed })
}

/// Shrinks a frame by an integer factor by point decimation (top-left sample
/// of each block); used by the reduced network geometry to map 128x128
/// sensor frames onto the network input side.
///
/// Decimation rather than block averaging: the finest bar classes accumulate
/// into signed stripes with periods at or below the block size, which a mean
/// cancels to zero while strided sampling folds them into distinct
/// lower-frequency patterns.
pub fn downsample_decimate(frame: &Array2<f64>, factor: usize) -> Array2<f64> {
    assert!(factor > 0 && frame.nrows() % factor == 0 && frame.ncols() % factor == 0);
    let (h, w) = (frame.nrows() / factor, frame.ncols() / factor);
    Array2::from_shape_fn((h, w), |(i, j)| frame[(i * factor, j * factor)])
}

/// Writes the "frame_idx,label,split" sidecar.
pub fn write_split_csv<W: Write>(dataset: &Dataset, mut sink: W) -> io::Result<()> {
    sink.write_all(b"frame_idx,label,split\n")?;
    for i in 0..dataset.labels.len() {
        writeln!(sink, "{},{},{}", i, dataset.labels[i], dataset.split[i].as_str())?;
    }
    Ok(())
}

/// Reads back a sidecar written by [`write_split_csv`].
pub fn read_split_csv<R: BufRead>(source: R) -> Result<(Vec<u8>, Vec<Split>), FramingError> {
    let mut labels = Vec::new();
    let mut split = Vec::new();
    for (row, line) in source.lines().enumerate() {
        let line = line.map_err(|_| FramingError::BadSidecarRow(row))?;
        if row == 0 {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let _idx = fields.next().ok_or(FramingError::BadSidecarRow(row))?;
        let label: u8 = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or(FramingError::BadSidecarRow(row))?;
        let s = match fields.next() {
            Some("train") => Split::Train,
            Some("test") => Split::Test,
            _ => return Err(FramingError::BadSidecarRow(row)),
        };
        labels.push(label);
        split.push(s);
    }
    Ok((labels, split))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{polarity_counts, DvsEvent};
    use crate::stimulus::{generate_recording, DvsEmulatorConfig, RecordingConfig};
    use std::collections::HashMap;

    fn stream_of(events: Vec<DvsEvent>) -> EventStream {
        EventStream { width: 128, height: 128, events }
    }

    #[test]
    fn empty_stream_accumulates_to_zero_frames() {
        let t = accumulate(&EventStream::empty_default(), 1000).unwrap();
        assert_eq!(t.count, 0);
        assert!(t.values.is_empty());
    }

    #[test]
    fn zero_period_is_rejected() {
        assert_eq!(
            accumulate(&EventStream::empty_default(), 0),
            Err(FramingError::ZeroFramePeriod)
        );
    }

    #[test]
    fn opposite_polarities_cancel_in_one_window() {
        let s = stream_of(vec![DvsEvent::new(10, 3, 4, 1), DvsEvent::new(20, 3, 4, -1)]);
        let t = accumulate(&s, 1000).unwrap();
        assert_eq!(t.count, 1);
        assert_eq!(t.frame(0)[4 * 128 + 3], 0.0);
    }

    #[test]
    fn accumulate_matches_hashmap_tally_oracle() {
        let cfg = RecordingConfig { num_frames: 9, ..RecordingConfig::default() };
        let (stream, _) = generate_recording(2, &cfg).unwrap();
        let t = accumulate(&stream, cfg.frame_period_us).unwrap();

        let mut tally: HashMap<(usize, u16, u16), i64> = HashMap::new();
        for e in &stream.events {
            *tally.entry(((e.t_us / cfg.frame_period_us) as usize, e.x, e.y)).or_default() +=
                i64::from(e.polarity);
        }
        for (&(k, x, y), &net) in &tally {
            assert_eq!(f64::from(t.frame(k)[usize::from(y) * 128 + usize::from(x)]), net as f64);
        }
        let total_nonzero: i64 = tally.values().sum();
        let sum: f64 = t.values.iter().map(|&v| f64::from(v)).sum();
        assert_eq!(sum, total_nonzero as f64);
    }

    #[test]
    fn accumulate_conserves_polarity_balance() {
        let cfg = RecordingConfig { num_frames: 7, ..RecordingConfig::default() };
        let (stream, _) = generate_recording(3, &cfg).unwrap();
        let (on, off) = polarity_counts(&stream);
        let t = accumulate(&stream, cfg.frame_period_us).unwrap();
        let sum: f64 = t.values.iter().map(|&v| f64::from(v)).sum();
        assert_eq!(sum, on as f64 - off as f64);
    }

    #[test]
    fn normalize_leaves_all_zero_and_small_tensors_alone() {
        let t = FrameTensor::zeros(2, 4, 4);
        assert_eq!(normalize(t.clone()), t);
        let small = FrameTensor { count: 1, height: 1, width: 2, values: vec![0.5, -0.25] };
        assert_eq!(normalize(small.clone()), small);
    }

    #[test]
    fn normalize_scales_extreme_to_unit() {
        let t = FrameTensor { count: 1, height: 1, width: 3, values: vec![-4.0, 2.0, 0.0] };
        let n = normalize(t);
        assert_eq!(n.values, vec![-1.0, 0.5, 0.0]);
    }

    #[test]
    fn normalize_is_idempotent_and_peaks_at_one() {
        let values: Vec<f32> = (0..64).map(|i| ((i * 37) % 13) as f32 - 6.0).collect();
        let t = FrameTensor { count: 4, height: 4, width: 4, values };
        let once = normalize(t);
        assert!((once.max_abs() - 1.0).abs() < 1e-6);
        let twice = normalize(once.clone());
        assert_eq!(once, twice);
    }

    fn seven_class_recordings(num_frames: u32) -> Vec<(EventStream, u8)> {
        let cfg = RecordingConfig {
            num_frames,
            emulator: DvsEmulatorConfig { noise_rate_hz: 2.0, seed: 5, ..Default::default() },
            ..RecordingConfig::default()
        };
        (0..NUM_CLASSES).map(|label| generate_recording(label, &cfg).unwrap()).collect()
    }

    #[test]
    fn dataset_split_is_stratified_and_deterministic() {
        let recordings = seven_class_recordings(20);
        let a = build_dataset(&recordings, 10_000, 42).unwrap();
        let b = build_dataset(&recordings, 10_000, 42).unwrap();
        assert_eq!(a.split, b.split);
        assert_eq!(a.labels, b.labels);

        for class in 0..NUM_CLASSES as u8 {
            let total = a.labels.iter().filter(|&&l| l == class).count();
            let test = (0..a.labels.len())
                .filter(|&i| a.labels[i] == class && a.split[i] == Split::Test)
                .count();
            assert_eq!(test, (total / 10).max(1), "class {class}: {test} of {total}");
        }
        let different_seed = build_dataset(&recordings, 10_000, 43).unwrap();
        assert_ne!(a.split, different_seed.split);
    }

    #[test]
    fn dataset_split_is_disjoint_and_exhaustive() {
        let recordings = seven_class_recordings(15);
        let d = build_dataset(&recordings, 10_000, 7).unwrap();
        let train = d.indices_of(Split::Train);
        let test = d.indices_of(Split::Test);
        assert_eq!(train.len() + test.len(), d.labels.len());
        assert!(train.iter().all(|i| !test.contains(i)));
    }

    #[test]
    fn missing_class_is_a_coverage_error() {
        let mut recordings = seven_class_recordings(10);
        recordings.retain(|(_, label)| *label != 4);
        assert_eq!(build_dataset(&recordings, 10_000, 1), Err(FramingError::MissingClass(4)));
    }

    #[test]
    fn sidecar_round_trip() {
        let recordings = seven_class_recordings(10);
        let d = build_dataset(&recordings, 10_000, 9).unwrap();
        let mut buf = Vec::new();
        write_split_csv(&d, &mut buf).unwrap();
        let (labels, split) = read_split_csv(&buf[..]).unwrap();
        assert_eq!(labels, d.labels);
        assert_eq!(split, d.split);
    }

    #[test]
    fn decimation_samples_block_corners() {
        let frame = Array2::from_shape_fn((8, 8), |(i, j)| (i * 8 + j) as f64);
        let down = downsample_decimate(&frame, 4);
        assert_eq!(down.dim(), (2, 2));
        assert_eq!(down[(0, 0)], 0.0);
        assert_eq!(down[(0, 1)], 4.0);
        assert_eq!(down[(1, 0)], 32.0);
    }

    #[test]
    fn decimation_preserves_fine_signed_stripes() {
        // Alternating two-column +/- stripes average to zero over 4x4 blocks
        // but decimate to a uniform nonzero frame.
        let frame = Array2::from_shape_fn((8, 8), |(_, j)| if (j / 2) % 2 == 0 { 1.0 } else { -1.0 });
        let down = downsample_decimate(&frame, 4);
        assert!(down.iter().all(|&v| v == 1.0));
    }
}
