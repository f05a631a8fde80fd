//! Static heatmaps of coupling matrices: SVG and fixed-width text.
//!
//! Rows are origin categories, drawn top to bottom; columns are destination
//! categories, left to right. Colors run from white (0) to red (the largest
//! entry).

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ingest::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FigureMode {
    None,
    Svg,
    Ascii,
}

impl FigureMode {
    pub fn extension(self) -> Option<&'static str> {
        match self {
            FigureMode::None => None,
            FigureMode::Svg => Some("svg"),
            FigureMode::Ascii => Some("txt"),
        }
    }
}

const CELL: f64 = 64.0;
const LEFT: f64 = 80.0;
const TOP: f64 = 56.0;
const BAR_GAP: f64 = 24.0;
const BAR_WIDTH: f64 = 16.0;

/// Writes `matrix` as a heatmap to `path`. Nothing is written for
/// [`FigureMode::None`].
pub fn emit_heatmap(matrix: &[Vec<f64>], title: &str, path: &Path, mode: FigureMode) -> io::Result<()> {
    let contents = match mode {
        FigureMode::None => return Ok(()),
        FigureMode::Svg => render_svg(matrix, title)?,
        FigureMode::Ascii => render_ascii(matrix, title)?,
    };
    write_atomic(path, contents.as_bytes())
}

fn check(matrix: &[Vec<f64>]) -> io::Result<f64> {
    let k = matrix.len();
    let mut max = 0.0f64;
    for row in matrix {
        if row.len() != k {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "heatmap matrix is not square"));
        }
        for &v in row {
            if !v.is_finite() || !(-1e-9..=1.0 + 1e-9).contains(&v) {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidInput,
                    format!("heatmap entry {v} is outside [0, 1]"),
                ));
            }
            max = max.max(v);
        }
    }
    Ok(max)
}

/// Fill color for `value` on a white-to-red scale topping out at `max`.
pub fn color(value: f64, max: f64) -> String {
    let t = if max > 0.0 { (value / max).clamp(0.0, 1.0) } else { 0.0 };
    let fade = (255.0 * (1.0 - t)).round() as u8;
    format!("#ff{fade:02x}{fade:02x}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn annotation(v: f64) -> String {
    // avoid "-0.000"
    format!("{:.3}", v.max(0.0))
}

pub fn render_svg(matrix: &[Vec<f64>], title: &str) -> io::Result<String> {
    let max = check(matrix)?;
    let k = matrix.len();
    let grid = CELL * k as f64;
    let bar_x = LEFT + grid + BAR_GAP;
    let width = bar_x + BAR_WIDTH + 56.0;
    let height = TOP + grid + 56.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + grid / 2.0,
        escape(title)
    );
    for (i, row) in matrix.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let x = LEFT + CELL * j as f64;
            let y = TOP + CELL * i as f64;
            let fill = color(v, max);
            let ink = if max > 0.0 && v / max > 0.6 { "#ffffff" } else { "#000000" };
            let _ = writeln!(
                s,
                r##"<rect class="cell" data-row="{}" data-col="{}" data-value="{}" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="#999999" stroke-width="0.5"/>"##,
                i + 1,
                j + 1,
                annotation(v),
            );
            let _ = writeln!(
                s,
                r#"<text class="annotation" x="{}" y="{}" text-anchor="middle" dominant-baseline="central" font-size="13" fill="{ink}">{}</text>"#,
                x + CELL / 2.0,
                y + CELL / 2.0,
                annotation(v)
            );
        }
    }
    // category ticks: destination along the bottom, origin down the left
    for c in 0..k {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
            LEFT + CELL * (c as f64 + 0.5),
            TOP + grid + 18.0,
            c + 1
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end" dominant-baseline="central" font-size="12">{}</text>"#,
            LEFT - 8.0,
            TOP + CELL * (c as f64 + 0.5),
            c + 1
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">Destination category</text>"#,
        LEFT + grid / 2.0,
        TOP + grid + 40.0
    );
    let _ = writeln!(
        s,
        r#"<text x="22" y="{0}" text-anchor="middle" font-size="13" transform="rotate(-90 22 {0})">Origin category</text>"#,
        TOP + grid / 2.0
    );

    let _ = writeln!(
        s,
        r##"<defs><linearGradient id="colorbar" x1="0" y1="1" x2="0" y2="0"><stop offset="0" stop-color="#ffffff"/><stop offset="1" stop-color="{}"/></linearGradient></defs>"##,
        color(max, max)
    );
    let _ = writeln!(
        s,
        r##"<rect class="colorbar" x="{bar_x}" y="{TOP}" width="{BAR_WIDTH}" height="{grid}" fill="url(#colorbar)" stroke="#999999" stroke-width="0.5"/>"##
    );
    for (label, y) in [(max, TOP), (max / 2.0, TOP + grid / 2.0), (0.0, TOP + grid)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" dominant-baseline="central" font-size="11">{}</text>"#,
            bar_x + BAR_WIDTH + 4.0,
            annotation(label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn render_ascii(matrix: &[Vec<f64>], title: &str) -> io::Result<String> {
    check(matrix)?;
    let mut s = format!("{title}\n");
    s.push_str("origin\\dest");
    for j in 0..matrix.len() {
        let _ = write!(s, " {:>7}", j + 1);
    }
    s.push('\n');
    for (i, row) in matrix.iter().enumerate() {
        let _ = write!(s, "{:>11}", i + 1);
        for &v in row {
            let _ = write!(s, " {:>7}", annotation(v));
        }
        s.push('\n');
    }
    Ok(s)
}
