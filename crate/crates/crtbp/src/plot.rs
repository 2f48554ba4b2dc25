//! Deterministic SVG figures: fixed viewbox, no timestamps, byte-stable
//! output for identical inputs.

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 50.0;

/// One named data series: a polyline or a scatter of markers.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub color: String,
    /// Marker radius; zero draws a polyline instead of markers.
    pub marker: f64,
    /// Close the polyline back to its first point.
    pub closed: bool,
}

impl Series {
    pub fn line(name: &str, points: Vec<(f64, f64)>, color: &str) -> Self {
        Self {
            name: name.into(),
            points,
            color: color.into(),
            marker: 0.0,
            closed: false,
        }
    }

    pub fn scatter(name: &str, points: Vec<(f64, f64)>, color: &str, radius: f64) -> Self {
        Self {
            name: name.into(),
            points,
            color: color.into(),
            marker: radius,
            closed: false,
        }
    }

    pub fn closed(mut self) -> Self {
        self.closed = true;
        self
    }
}

/// A figure with shared axes over all series.
#[derive(Debug, Clone)]
pub struct Figure {
    pub title: String,
    pub series: Vec<Series>,
}

impl Figure {
    pub fn new(title: &str) -> Self {
        Self {
            title: title.into(),
            series: Vec::new(),
        }
    }

    pub fn with(mut self, series: Series) -> Self {
        self.series.push(series);
        self
    }

    fn bounds(&self) -> Result<(f64, f64, f64, f64)> {
        let mut xmin = f64::INFINITY;
        let mut xmax = f64::NEG_INFINITY;
        let mut ymin = f64::INFINITY;
        let mut ymax = f64::NEG_INFINITY;
        for s in &self.series {
            if s.points.is_empty() {
                return Err(Error::Geometry(format!(
                    "figure '{}': series '{}' has no points",
                    self.title, s.name
                )));
            }
            for &(x, y) in &s.points {
                if !x.is_finite() || !y.is_finite() {
                    return Err(Error::Geometry(format!(
                        "figure '{}': series '{}' has a non-finite point",
                        self.title, s.name
                    )));
                }
                xmin = xmin.min(x);
                xmax = xmax.max(x);
                ymin = ymin.min(y);
                ymax = ymax.max(y);
            }
        }
        if self.series.is_empty() {
            return Err(Error::Geometry(format!(
                "figure '{}' has no data series",
                self.title
            )));
        }
        // Degenerate spans get a symmetric pad so a single point still maps.
        if xmax - xmin < 1e-12 {
            xmin -= 0.5;
            xmax += 0.5;
        }
        if ymax - ymin < 1e-12 {
            ymin -= 0.5;
            ymax += 0.5;
        }
        Ok((xmin, xmax, ymin, ymax))
    }

    /// Render the SVG text. The same figure always yields identical bytes.
    pub fn render(&self) -> Result<String> {
        let (xmin, xmax, ymin, ymax) = self.bounds()?;
        let sx = (WIDTH - 2.0 * MARGIN) / (xmax - xmin);
        let sy = (HEIGHT - 2.0 * MARGIN) / (ymax - ymin);
        let map = |x: f64, y: f64| {
            (
                MARGIN + (x - xmin) * sx,
                HEIGHT - MARGIN - (y - ymin) * sy,
            )
        };
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" width=\"{WIDTH}\" height=\"{HEIGHT}\">"
        );
        let _ = writeln!(
            svg,
            "  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
        );
        let _ = writeln!(
            svg,
            "  <text x=\"{:.1}\" y=\"30\" font-family=\"sans-serif\" font-size=\"18\" text-anchor=\"middle\">{}</text>",
            WIDTH / 2.0,
            xml_escape(&self.title)
        );
        let _ = writeln!(
            svg,
            "  <rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#888\"/>",
            WIDTH - 2.0 * MARGIN,
            HEIGHT - 2.0 * MARGIN
        );
        for (corner, anchor, label) in [
            ((MARGIN, HEIGHT - MARGIN + 20.0), "middle", xmin),
            ((WIDTH - MARGIN, HEIGHT - MARGIN + 20.0), "middle", xmax),
        ] {
            let _ = writeln!(
                svg,
                "  <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"{anchor}\">{label:.6}</text>",
                corner.0, corner.1
            );
        }
        for (ypix, label) in [(HEIGHT - MARGIN, ymin), (MARGIN, ymax)] {
            let _ = writeln!(
                svg,
                "  <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">{label:.6}</text>",
                MARGIN - 6.0,
                ypix + 4.0
            );
        }
        for s in &self.series {
            if s.marker > 0.0 {
                let _ = writeln!(svg, "  <g fill=\"{}\" data-series=\"{}\">", s.color, xml_escape(&s.name));
                for &(x, y) in &s.points {
                    let (px, py) = map(x, y);
                    let _ = writeln!(
                        svg,
                        "    <circle cx=\"{px:.3}\" cy=\"{py:.3}\" r=\"{:.1}\"/>",
                        s.marker
                    );
                }
                let _ = writeln!(svg, "  </g>");
            } else {
                let mut d = String::new();
                for (k, &(x, y)) in s.points.iter().enumerate() {
                    let (px, py) = map(x, y);
                    let _ = write!(d, "{}{px:.3},{py:.3} ", if k == 0 { "M" } else { "L" });
                }
                if s.closed {
                    d.push('Z');
                }
                let _ = writeln!(
                    svg,
                    "  <path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\" data-series=\"{}\"/>",
                    d.trim_end(),
                    s.color,
                    xml_escape(&s.name)
                );
            }
        }
        svg.push_str("</svg>\n");
        Ok(svg)
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
