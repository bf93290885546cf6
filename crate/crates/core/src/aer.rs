//! Bit-exact interchange formats.
//!
//! Event file (`AER1`): 16-byte header (magic, u16 width, u16 height,
//! u64 event count) followed by 13-byte records (u64 t_us, u16 x, u16 y,
//! i8 polarity). Frame file (`FRM1`): 16-byte header (magic, u32 count,
//! u32 height, u32 width) followed by f32 values, row-major, frame-major.
//! All integers and floats little-endian.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::events::{validate, DvsEvent, EventStream, Violation};
use crate::framing::FrameTensor;

pub const AER_MAGIC: [u8; 4] = *b"AER1";
pub const FRM_MAGIC: [u8; 4] = *b"FRM1";

/// Header (16) + one 13-byte record per event.
pub fn aer_file_size(event_count: u64) -> u64 {
    16 + 13 * event_count
}

/// Header (16) + 4 bytes per value.
pub fn frm_file_size(count: u64, height: u64, width: u64) -> u64 {
    16 + 4 * count * height * width
}

#[derive(Debug, Error)]
pub enum AerError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("truncated payload: expected {expected} bytes, got {got}")]
    Truncated { expected: u64, got: u64 },
    #[error("header dimensions invalid: {0}x{1}")]
    BadDimensions(u16, u16),
    #[error("corrupt stream: {}", format_violations(.0))]
    CorruptStream(Vec<Violation>),
    #[error("i/o error after writing {bytes_written} bytes")]
    Io {
        #[source]
        source: io::Error,
        bytes_written: u64,
    },
    #[error(transparent)]
    Read(#[from] io::Error),
}

fn format_violations(violations: &[Violation]) -> String {
    let shown: Vec<String> = violations.iter().take(5).map(|v| v.to_string()).collect();
    let mut s = shown.join("; ");
    if violations.len() > 5 {
        s.push_str(&format!(" (and {} more)", violations.len() - 5));
    }
    s
}

struct CountingWriter<W: Write> {
    inner: W,
    written: u64,
}

impl<W: Write> CountingWriter<W> {
    fn new(inner: W) -> Self {
        Self { inner, written: 0 }
    }

    fn put(&mut self, bytes: &[u8]) -> Result<(), AerError> {
        match self.inner.write_all(bytes) {
            Ok(()) => {
                self.written += bytes.len() as u64;
                Ok(())
            }
            Err(source) => Err(AerError::Io { source, bytes_written: self.written }),
        }
    }
}

/// Writes an event stream; returns the total byte count (16 + 13n).
pub fn write_events<W: Write>(stream: &EventStream, sink: W) -> Result<u64, AerError> {
    let mut w = CountingWriter::new(sink);
    w.put(&AER_MAGIC)?;
    w.put(&stream.width.to_le_bytes())?;
    w.put(&stream.height.to_le_bytes())?;
    w.put(&(stream.events.len() as u64).to_le_bytes())?;
    for e in &stream.events {
        w.put(&e.t_us.to_le_bytes())?;
        w.put(&e.x.to_le_bytes())?;
        w.put(&e.y.to_le_bytes())?;
        w.put(&e.polarity.to_le_bytes())?;
    }
    Ok(w.written)
}

fn read_exact_or_truncated<R: Read>(source: &mut R, buf: &mut [u8], have: u64, want: u64) -> Result<(), AerError> {
    let mut filled = 0usize;
    while filled < buf.len() {
        let n = source.read(&mut buf[filled..])?;
        if n == 0 {
            return Err(AerError::Truncated { expected: want, got: have + filled as u64 });
        }
        filled += n;
    }
    Ok(())
}

/// Reads and validates an event stream written by [`write_events`].
pub fn read_events<R: Read>(mut source: R) -> Result<EventStream, AerError> {
    let mut header = [0u8; 16];
    read_exact_or_truncated(&mut source, &mut header, 0, 16)?;
    if header[0..4] != AER_MAGIC {
        return Err(AerError::BadMagic {
            expected: AER_MAGIC,
            found: [header[0], header[1], header[2], header[3]],
        });
    }
    let width = u16::from_le_bytes([header[4], header[5]]);
    let height = u16::from_le_bytes([header[6], header[7]]);
    if width == 0 || height == 0 {
        return Err(AerError::BadDimensions(width, height));
    }
    let count = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let expected = aer_file_size(count);

    let mut stream = EventStream::new(width, height);
    stream.events.reserve(count.min(1 << 24) as usize);
    let mut record = [0u8; 13];
    for i in 0..count {
        read_exact_or_truncated(&mut source, &mut record, 16 + 13 * i, expected)?;
        stream.events.push(DvsEvent {
            t_us: u64::from_le_bytes(record[0..8].try_into().unwrap()),
            x: u16::from_le_bytes([record[8], record[9]]),
            y: u16::from_le_bytes([record[10], record[11]]),
            polarity: record[12] as i8,
        });
    }
    let violations = validate(&stream);
    if !violations.is_empty() {
        return Err(AerError::CorruptStream(violations));
    }
    Ok(stream)
}

/// Writes a frame tensor; returns the total byte count.
pub fn write_frames<W: Write>(frames: &FrameTensor, sink: W) -> Result<u64, AerError> {
    let mut w = CountingWriter::new(sink);
    w.put(&FRM_MAGIC)?;
    w.put(&(frames.count as u32).to_le_bytes())?;
    w.put(&(frames.height as u32).to_le_bytes())?;
    w.put(&(frames.width as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(frames.values.len().min(1 << 20) * 4);
    for chunk in frames.values.chunks(1 << 18) {
        buf.clear();
        for v in chunk {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.put(&buf)?;
    }
    Ok(w.written)
}

/// Reads a frame tensor written by [`write_frames`].
pub fn read_frames<R: Read>(mut source: R) -> Result<FrameTensor, AerError> {
    let mut header = [0u8; 16];
    read_exact_or_truncated(&mut source, &mut header, 0, 16)?;
    if header[0..4] != FRM_MAGIC {
        return Err(AerError::BadMagic {
            expected: FRM_MAGIC,
            found: [header[0], header[1], header[2], header[3]],
        });
    }
    let count = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let total = count * height * width;
    let expected = frm_file_size(count as u64, height as u64, width as u64);

    let mut values = Vec::with_capacity(total.min(1 << 26));
    let mut record = [0u8; 4];
    for i in 0..total {
        read_exact_or_truncated(&mut source, &mut record, 16 + 4 * i as u64, expected)?;
        values.push(f32::from_le_bytes(record));
    }
    Ok(FrameTensor { count, height, width, values })
}

/// Emits "t_us,x,y,neuron,polarity" rows, neuron = y * width + x.
/// Returns the number of event rows (excluding the header row).
pub fn export_csv<W: Write>(stream: &EventStream, sink: W) -> Result<u64, AerError> {
    let mut w = CountingWriter::new(sink);
    w.put(b"t_us,x,y,neuron,polarity\n")?;
    let mut rows = 0u64;
    for e in &stream.events {
        let line = format!("{},{},{},{},{}\n", e.t_us, e.x, e.y, stream.flat_index(e), e.polarity);
        w.put(line.as_bytes())?;
        rows += 1;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimulus::{generate_recording, RecordingConfig};
    use proptest::prelude::*;

    #[test]
    fn empty_stream_writes_header_only() {
        let mut buf = Vec::new();
        let n = write_events(&EventStream::empty_default(), &mut buf).unwrap();
        assert_eq!(n, 16);
        assert_eq!(buf.len(), 16);
        assert_eq!(&buf[0..4], b"AER1");
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 0);
    }

    #[test]
    fn single_event_stream_is_29_bytes() {
        let mut s = EventStream::empty_default();
        s.events.push(DvsEvent::new(42, 3, 4, -1));
        let mut buf = Vec::new();
        assert_eq!(write_events(&s, &mut buf).unwrap(), 29);
        assert_eq!(buf.len(), 29);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let buf = b"XXXXxxxxxxxxxxxx".to_vec();
        assert!(matches!(read_events(&buf[..]), Err(AerError::BadMagic { .. })));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut s = EventStream::empty_default();
        for i in 0..5 {
            s.events.push(DvsEvent::new(i, 0, 0, 1));
        }
        let mut buf = Vec::new();
        write_events(&s, &mut buf).unwrap();
        buf.truncate(16 + 13 * 4); // header claims 5 events, only 4 present
        match read_events(&buf[..]) {
            Err(AerError::Truncated { expected, got }) => {
                assert_eq!(expected, aer_file_size(5));
                assert_eq!(got, 16 + 13 * 4);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn corrupt_polarity_is_reported_with_violations() {
        let mut s = EventStream::empty_default();
        s.events.push(DvsEvent::new(0, 0, 0, 1));
        let mut buf = Vec::new();
        write_events(&s, &mut buf).unwrap();
        buf[28] = 0; // zero polarity
        match read_events(&buf[..]) {
            Err(AerError::CorruptStream(v)) => assert_eq!(v.len(), 1),
            other => panic!("expected corrupt-stream error, got {other:?}"),
        }
    }

    #[test]
    fn generated_recording_round_trips() {
        let cfg = RecordingConfig { num_frames: 8, ..RecordingConfig::default() };
        let (stream, _) = generate_recording(2, &cfg).unwrap();
        let mut buf = Vec::new();
        let n = write_events(&stream, &mut buf).unwrap();
        assert_eq!(n, aer_file_size(stream.len() as u64));
        let back = read_events(&buf[..]).unwrap();
        assert_eq!(back, stream);
    }

    #[test]
    fn zero_frames_writes_dims_only() {
        let t = FrameTensor { count: 0, height: 128, width: 128, values: vec![] };
        let mut buf = Vec::new();
        assert_eq!(write_frames(&t, &mut buf).unwrap(), 16);
        let back = read_frames(&buf[..]).unwrap();
        assert_eq!(back.count, 0);
        assert_eq!((back.height, back.width), (128, 128));
    }

    #[test]
    fn tiny_zero_frame_layout() {
        let t = FrameTensor { count: 1, height: 2, width: 2, values: vec![0.0; 4] };
        let mut buf = Vec::new();
        assert_eq!(write_frames(&t, &mut buf).unwrap(), 32);
        assert!(buf[16..].iter().all(|&b| b == 0));
    }

    #[test]
    fn csv_schema_and_neuron_index() {
        let mut s = EventStream::empty_default();
        s.events.push(DvsEvent::new(5, 1, 2, 1));
        let mut buf = Vec::new();
        let rows = export_csv(&s, &mut buf).unwrap();
        assert_eq!(rows, 1);
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t_us,x,y,neuron,polarity\n5,1,2,257,1\n");
    }

    #[test]
    fn csv_empty_stream_is_header_only() {
        let mut buf = Vec::new();
        let rows = export_csv(&EventStream::empty_default(), &mut buf).unwrap();
        assert_eq!(rows, 0);
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }

    #[test]
    fn csv_row_count_equals_event_count_for_recording() {
        let cfg = RecordingConfig { num_frames: 5, ..RecordingConfig::default() };
        let (stream, _) = generate_recording(1, &cfg).unwrap();
        let mut buf = Vec::new();
        let rows = export_csv(&stream, &mut buf).unwrap();
        assert_eq!(rows, stream.len() as u64);
        // Oracle tally: count newline-separated data lines directly.
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), stream.len() + 1);
    }

    prop_compose! {
        fn arb_sorted_stream()(mut ts in prop::collection::vec(0u64..1_000_000, 0..300),
                               xs in prop::collection::vec(0u16..128, 300),
                               ys in prop::collection::vec(0u16..128, 300),
                               ps in prop::collection::vec(any::<bool>(), 300)) -> EventStream {
            ts.sort_unstable();
            let events = ts.iter().enumerate()
                .map(|(i, &t)| DvsEvent::new(t, xs[i], ys[i], if ps[i] { 1 } else { -1 }))
                .collect();
            EventStream { width: 128, height: 128, events }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn event_round_trip_is_exact(stream in arb_sorted_stream()) {
            let mut buf = Vec::new();
            let n = write_events(&stream, &mut buf).unwrap();
            prop_assert_eq!(n, aer_file_size(stream.len() as u64));
            prop_assert_eq!(n as usize, buf.len());
            let back = read_events(&buf[..]).unwrap();
            prop_assert_eq!(back, stream);
        }

        #[test]
        fn frame_round_trip_is_bitwise(values in prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 0..200)) {
            let count = values.len();
            let t = FrameTensor { count, height: 1, width: 1, values };
            let mut buf = Vec::new();
            write_frames(&t, &mut buf).unwrap();
            let back = read_frames(&buf[..]).unwrap();
            prop_assert_eq!(back.values.len(), t.values.len());
            for (a, b) in back.values.iter().zip(&t.values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
