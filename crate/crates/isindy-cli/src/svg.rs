//! Minimal SVG line charts: truth as a solid red polyline, the identified
//! trajectory dashed black, observations as green dots. One stacked panel
//! per state component.

use std::fmt::Write;
use std::path::Path;

use isindy::types::{StateMatrix, TimeGrid};

const PANEL_WIDTH: f64 = 820.0;
const PANEL_HEIGHT: f64 = 240.0;
const MARGIN: f64 = 45.0;

pub struct Overlay<'a> {
    pub truth: &'a StateMatrix,
    pub identified: Option<&'a StateMatrix>,
    pub observations: Option<&'a StateMatrix>,
    pub labels: &'a [String],
}

struct Scale {
    t0: f64,
    t1: f64,
    lo: f64,
    hi: f64,
    top: f64,
}

impl Scale {
    fn x(&self, t: f64) -> f64 {
        MARGIN + (t - self.t0) / (self.t1 - self.t0) * (PANEL_WIDTH - 2.0 * MARGIN)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.hi - self.lo).max(1e-12);
        self.top + PANEL_HEIGHT - MARGIN - (v - self.lo) / span * (PANEL_HEIGHT - 2.0 * MARGIN)
    }
}

fn polyline(
    out: &mut String,
    grid: &TimeGrid,
    values: impl Iterator<Item = f64>,
    scale: &Scale,
    style: &str,
) {
    let mut points = String::new();
    for (k, v) in values.enumerate() {
        let _ = write!(points, "{:.2},{:.2} ", scale.x(grid.time(k)), scale.y(v));
    }
    let _ = writeln!(
        out,
        r#"<polyline fill="none" {style} points="{}"/>"#,
        points.trim_end()
    );
}

/// Write the overlay chart; panels share the time axis.
pub fn write_overlay(path: &Path, overlay: &Overlay) -> std::io::Result<()> {
    let d = overlay.truth.dim();
    let total_height = PANEL_HEIGHT * d as f64;
    let grid = &overlay.truth.grid;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_WIDTH}" height="{total_height}" viewBox="0 0 {PANEL_WIDTH} {total_height}">"#
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for comp in 0..d {
        let top = PANEL_HEIGHT * comp as f64;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut absorb = |m: &StateMatrix| {
            for k in 0..m.values.nrows() {
                lo = lo.min(m.values[(k, comp)]);
                hi = hi.max(m.values[(k, comp)]);
            }
        };
        absorb(overlay.truth);
        if let Some(m) = overlay.identified {
            absorb(m);
        }
        if let Some(m) = overlay.observations {
            absorb(m);
        }
        let scale = Scale {
            t0: grid.time(0),
            t1: grid.end(),
            lo,
            hi,
            top,
        };
        // frame and axis annotations
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="gray"/>"#,
            MARGIN,
            top + MARGIN,
            PANEL_WIDTH - 2.0 * MARGIN,
            PANEL_HEIGHT - 2.0 * MARGIN
        );
        let label = overlay
            .labels
            .get(comp)
            .cloned()
            .unwrap_or_else(|| format!("x{}", comp + 1));
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="13" font-family="sans-serif">{label}</text>"#,
            MARGIN,
            top + MARGIN - 8.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" font-family="sans-serif" text-anchor="end">{:.3}</text>"#,
            MARGIN - 4.0,
            top + MARGIN + 10.0,
            hi
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" font-family="sans-serif" text-anchor="end">{:.3}</text>"#,
            MARGIN - 4.0,
            top + PANEL_HEIGHT - MARGIN,
            lo
        );
        if let Some(obs) = overlay.observations {
            // thin the dots so dense grids stay readable
            let stride = (obs.values.nrows() / 300).max(1);
            for k in (0..obs.values.nrows()).step_by(stride) {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="1.5" fill="forestgreen" fill-opacity="0.55"/>"#,
                    scale.x(obs.grid.time(k)),
                    scale.y(obs.values[(k, comp)])
                );
            }
        }
        polyline(
            &mut out,
            grid,
            (0..grid.len()).map(|k| overlay.truth.values[(k, comp)]),
            &scale,
            r#"stroke="crimson" stroke-width="1.6""#,
        );
        if let Some(ident) = overlay.identified {
            polyline(
                &mut out,
                &ident.grid,
                (0..ident.grid.len()).map(|k| ident.values[(k, comp)]),
                &scale,
                r#"stroke="black" stroke-width="1.3" stroke-dasharray="6 4""#,
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" font-family="sans-serif">t = {:.3} .. {:.3}</text>"#,
            PANEL_WIDTH - MARGIN - 150.0,
            top + MARGIN - 8.0,
            grid.time(0),
            grid.end()
        );
    }
    out.push_str("</svg>\n");
    std::fs::write(path, out)
}
