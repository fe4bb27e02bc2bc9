use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const SIZE: f64 = 480.0;
const MARGIN: f64 = 40.0;
const MARKER: f64 = 3.0;

/// Scatter of original (blue) and corrected (red) 2-D points: circles for
/// `s = 0`, squares otherwise.
pub fn render_direction_plot(before: &Tensor, after: &Tensor, s: &[usize]) -> Result<String> {
    for t in [before, after] {
        if t.cols() != 2 {
            return Err(Error::Unsupported(format!(
                "direction plots need 2 features, got {}",
                t.cols()
            )));
        }
    }
    if before.rows() != after.rows() || before.rows() != s.len() {
        return Err(Error::Contract("plot inputs differ in length".into()));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for row in before.iter_rows().chain(after.iter_rows()) {
        for c in 0..2 {
            lo[c] = lo[c].min(row[c]);
            hi[c] = hi[c].max(row[c]);
        }
    }
    for c in 0..2 {
        if !(lo[c] < hi[c]) {
            let mid = if lo[c].is_finite() { lo[c] } else { 0.0 };
            lo[c] = mid - 1.0;
            hi[c] = mid + 1.0;
        }
    }
    let span = SIZE - 2.0 * MARGIN;
    let px = |v: f64| MARGIN + (v - lo[0]) / (hi[0] - lo[0]) * span;
    let py = |v: f64| SIZE - MARGIN - (v - lo[1]) / (hi[1] - lo[1]) * span;

    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(w, r#"<rect class="background" x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let (x0, y0, x1, y1) = (MARGIN, SIZE - MARGIN, SIZE - MARGIN, MARGIN);
    let _ = writeln!(w, r#"<g class="axes" stroke="black" stroke-width="1">"#);
    let _ = writeln!(w, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/>"#);
    let _ = writeln!(w, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/>"#);
    let _ = writeln!(w, "</g>");
    let _ = writeln!(
        w,
        r#"<text x="{x0}" y="{:.1}" font-size="10">x0 [{:.3}, {:.3}]</text>"#,
        SIZE - MARGIN / 3.0,
        lo[0],
        hi[0]
    );
    let _ = writeln!(
        w,
        r#"<text x="4" y="{:.1}" font-size="10">x1 [{:.3}, {:.3}]</text>"#,
        MARGIN / 2.0,
        lo[1],
        hi[1]
    );
    for (class, color, t) in [("original", "blue", before), ("corrected", "red", after)] {
        let _ = writeln!(w, r#"<g class="{class}" fill="{color}" fill-opacity="0.6">"#);
        for (row, &g) in t.iter_rows().zip(s) {
            let (cx, cy) = (px(row[0]), py(row[1]));
            if g == 0 {
                let _ = writeln!(w, r#"<circle class="marker" cx="{cx:.2}" cy="{cy:.2}" r="{MARKER}"/>"#);
            } else {
                let _ = writeln!(
                    w,
                    r#"<rect class="marker" x="{:.2}" y="{:.2}" width="{}" height="{}"/>"#,
                    cx - MARKER,
                    cy - MARKER,
                    2.0 * MARKER,
                    2.0 * MARKER
                );
            }
        }
        let _ = writeln!(w, "</g>");
    }
    let _ = writeln!(w, "</svg>");
    Ok(out)
}

pub fn emit_direction_plot(before: &Tensor, after: &Tensor, s: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let svg = render_direction_plot(before, after, s)?;
    let path = path.as_ref();
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
