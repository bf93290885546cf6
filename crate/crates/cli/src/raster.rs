//! SVG raster plots: time on the horizontal axis, flat neuron index on the
//! vertical axis, ON events in blue and OFF events in red.

use std::io::{self, Write};

use fovea_core::events::EventStream;

const WIDTH: f64 = 1000.0;
const HEIGHT: f64 = 620.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 50.0;

const ON_COLOR: &str = "#1f77b4";
const OFF_COLOR: &str = "#d62728";

/// Writes a scatter raster of the stream. Streams longer than `max_points`
/// are thinned with a deterministic stride; returns the marker count drawn.
pub fn write_svg<W: Write>(stream: &EventStream, mut sink: W, max_points: usize) -> io::Result<usize> {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let t_max = stream.events.last().map(|e| e.t_us).unwrap_or(0).max(1) as f64;
    let neuron_max = (u32::from(stream.width) * u32::from(stream.height)).max(1) as f64;

    writeln!(
        sink,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    )?;
    writeln!(sink, "  <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>")?;
    // Axes.
    writeln!(
        sink,
        "  <line x1=\"{MARGIN_LEFT}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        HEIGHT - MARGIN_BOTTOM,
        WIDTH - MARGIN_RIGHT,
        HEIGHT - MARGIN_BOTTOM
    )?;
    writeln!(
        sink,
        "  <line x1=\"{MARGIN_LEFT}\" y1=\"{MARGIN_TOP}\" x2=\"{MARGIN_LEFT}\" y2=\"{}\" stroke=\"black\"/>",
        HEIGHT - MARGIN_BOTTOM
    )?;
    writeln!(
        sink,
        "  <text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">time (us)</text>",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    )?;
    writeln!(
        sink,
        "  <text x=\"16\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">neuron</text>",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    )?;
    writeln!(
        sink,
        "  <text x=\"{MARGIN_LEFT}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">0</text>",
        HEIGHT - MARGIN_BOTTOM + 16.0
    )?;
    writeln!(
        sink,
        "  <text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
        WIDTH - MARGIN_RIGHT,
        HEIGHT - MARGIN_BOTTOM + 16.0,
        t_max as u64
    )?;
    writeln!(
        sink,
        "  <text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{}</text>",
        MARGIN_LEFT - 6.0,
        MARGIN_TOP + 10.0,
        neuron_max as u64
    )?;
    writeln!(
        sink,
        "  <text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">0</text>",
        MARGIN_LEFT - 6.0,
        HEIGHT - MARGIN_BOTTOM
    )?;
    // Legend.
    writeln!(
        sink,
        "  <circle cx=\"{}\" cy=\"{MARGIN_TOP}\" r=\"4\" fill=\"{ON_COLOR}\"/><text x=\"{}\" y=\"{}\" font-size=\"11\">ON</text>",
        WIDTH - 130.0,
        WIDTH - 122.0,
        MARGIN_TOP + 4.0
    )?;
    writeln!(
        sink,
        "  <circle cx=\"{}\" cy=\"{MARGIN_TOP}\" r=\"4\" fill=\"{OFF_COLOR}\"/><text x=\"{}\" y=\"{}\" font-size=\"11\">OFF</text>",
        WIDTH - 80.0,
        WIDTH - 72.0,
        MARGIN_TOP + 4.0
    )?;

    let n = stream.events.len();
    let stride = if max_points == 0 { 1 } else { n.div_ceil(max_points.max(1)).max(1) };
    let mut drawn = 0usize;
    for (i, e) in stream.events.iter().enumerate() {
        if i % stride != 0 {
            continue;
        }
        let x = MARGIN_LEFT + plot_w * (e.t_us as f64 / t_max);
        let y = HEIGHT - MARGIN_BOTTOM - plot_h * (f64::from(stream.flat_index(e)) / neuron_max);
        let color = if e.polarity > 0 { ON_COLOR } else { OFF_COLOR };
        writeln!(sink, "  <circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"1.2\" fill=\"{color}\"/>")?;
        drawn += 1;
    }
    writeln!(sink, "</svg>")?;
    Ok(drawn)
}
