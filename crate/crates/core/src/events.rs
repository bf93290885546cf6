//! Core DVS event data model: ordering, validation, polarity bookkeeping.

use std::fmt;

/// ON event: illumination increased.
pub const POLARITY_ON: i8 = 1;
/// OFF event: illumination decreased.
pub const POLARITY_OFF: i8 = -1;

/// One polarity spike from the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DvsEvent {
    /// Timestamp in microseconds.
    pub t_us: u64,
    /// Column index, 0..width-1.
    pub x: u16,
    /// Row index, 0..height-1.
    pub y: u16,
    /// +1 for ON (increase), -1 for OFF (decrease). No other value is valid.
    pub polarity: i8,
}

impl DvsEvent {
    pub fn new(t_us: u64, x: u16, y: u16, polarity: i8) -> Self {
        Self { t_us, x, y, polarity }
    }
}

/// A timestamp-ordered sequence of events from one sensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub width: u16,
    pub height: u16,
    pub events: Vec<DvsEvent>,
}

impl EventStream {
    pub fn new(width: u16, height: u16) -> Self {
        Self { width, height, events: Vec::new() }
    }

    /// Standard 128x128 sensor with no events.
    pub fn empty_default() -> Self {
        Self::new(128, 128)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Flat neuron index of an event: y * width + x (0..=16383 on a 128x128 sensor).
    pub fn flat_index(&self, e: &DvsEvent) -> u32 {
        u32::from(e.y) * u32::from(self.width) + u32::from(e.x)
    }
}

/// One data problem found by [`validate`]. Violations are data, not errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    OutOfBounds { index: usize, x: u16, y: u16 },
    BadPolarity { index: usize, value: i8 },
    TimestampInversion { index: usize, prev_t_us: u64, t_us: u64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OutOfBounds { index, x, y } => {
                write!(f, "event {index}: coordinates ({x}, {y}) out of bounds")
            }
            Violation::BadPolarity { index, value } => {
                write!(f, "event {index}: polarity {value} is not +1 or -1")
            }
            Violation::TimestampInversion { index, prev_t_us, t_us } => {
                write!(f, "event {index}: timestamp {t_us} before predecessor {prev_t_us}")
            }
        }
    }
}

/// Checks bounds, polarity, and timestamp ordering. An empty result means the
/// stream is valid.
pub fn validate(stream: &EventStream) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut prev_t: Option<u64> = None;
    for (index, e) in stream.events.iter().enumerate() {
        if e.x >= stream.width || e.y >= stream.height {
            out.push(Violation::OutOfBounds { index, x: e.x, y: e.y });
        }
        if e.polarity != POLARITY_ON && e.polarity != POLARITY_OFF {
            out.push(Violation::BadPolarity { index, value: e.polarity });
        }
        if let Some(p) = prev_t {
            if e.t_us < p {
                out.push(Violation::TimestampInversion { index, prev_t_us: p, t_us: e.t_us });
            }
        }
        prev_t = Some(e.t_us);
    }
    out
}

/// Stable sort by timestamp; ties keep their original relative order.
pub fn sort_events(mut stream: EventStream) -> EventStream {
    stream.events.sort_by_key(|e| e.t_us);
    stream
}

/// (ON count, OFF count). Any polarity > 0 counts as ON, otherwise OFF.
pub fn polarity_counts(stream: &EventStream) -> (u64, u64) {
    let mut on = 0u64;
    let mut off = 0u64;
    for e in &stream.events {
        if e.polarity > 0 {
            on += 1;
        } else {
            off += 1;
        }
    }
    (on, off)
}
