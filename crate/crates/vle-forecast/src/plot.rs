//! Minimal SVG line plots for training curves and ROC diagrams.
//!
//! The writer is deliberately small: fixed canvas, five ticks per axis, a
//! color palette, an optional diagonal reference line, and a legend. Output
//! is plain SVG text and byte-deterministic for identical input.

use std::io::{self, Write};
use std::path::Path;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 60.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Draw a dashed reference diagonal from the lower-left to the
    /// upper-right of the data range (for ROC plots).
    pub diagonal: bool,
}

fn fmt(v: f64) -> String {
    // Fixed short decimal keeps the output stable and readable.
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Writes `spec` as an SVG file. Every series must contain at least one
/// point.
pub fn write_line_plot(path: &Path, spec: &PlotSpec) -> io::Result<()> {
    if spec.series.is_empty() || spec.series.iter().any(|s| s.points.is_empty()) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "a plot needs at least one series and no empty series",
        ));
    }
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in &spec.series {
        for &(x, y) in &s.points {
            if !x.is_finite() || !y.is_finite() {
                continue;
            }
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !x_min.is_finite() {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "no finite points to plot",
        ));
    }
    if x_max == x_min {
        x_max += 1.0;
        x_min -= 1.0;
    }
    if y_max == y_min {
        y_max += 1.0;
        y_min -= 1.0;
    }

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| MARGIN_TOP + plot_h - (y - y_min) / (y_max - y_min) * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "<text x=\"{}\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"18\">{}</text>\n",
        WIDTH / 2.0,
        escape(&spec.title)
    ));

    // Axes.
    out.push_str(&format!(
        "<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = MARGIN_LEFT,
        r = WIDTH - MARGIN_RIGHT,
        t = MARGIN_TOP,
        b = HEIGHT - MARGIN_BOTTOM
    ));

    // Ticks and grid.
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let px = sx(fx);
        out.push_str(&format!(
            "<line x1=\"{px:.1}\" y1=\"{b}\" x2=\"{px:.1}\" y2=\"{b2}\" stroke=\"black\"/>\n<text x=\"{px:.1}\" y=\"{ty}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            fmt(fx),
            b = HEIGHT - MARGIN_BOTTOM,
            b2 = HEIGHT - MARGIN_BOTTOM + 6.0,
            ty = HEIGHT - MARGIN_BOTTOM + 22.0,
        ));
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        let py = sy(fy);
        out.push_str(&format!(
            "<line x1=\"{l1}\" y1=\"{py:.1}\" x2=\"{l}\" y2=\"{py:.1}\" stroke=\"black\"/>\n<line x1=\"{l}\" y1=\"{py:.1}\" x2=\"{r}\" y2=\"{py:.1}\" stroke=\"#dddddd\"/>\n<text x=\"{tx}\" y=\"{py2:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            fmt(fy),
            l1 = MARGIN_LEFT - 6.0,
            l = MARGIN_LEFT,
            r = WIDTH - MARGIN_RIGHT,
            tx = MARGIN_LEFT - 10.0,
            py2 = py + 4.0,
        ));
    }

    // Axis labels.
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 14.0,
        escape(&spec.x_label)
    ));
    out.push_str(&format!(
        "<text x=\"20\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\" transform=\"rotate(-90 20 {})\">{}</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(&spec.y_label)
    ));

    if spec.diagonal {
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#999999\" stroke-dasharray=\"6,4\"/>\n",
            sx(x_min),
            sy(y_min),
            sx(x_max),
            sy(y_max)
        ));
    }

    for (i, s) in spec.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        // Legend entry.
        let ly = MARGIN_TOP + 8.0 + i as f64 * 18.0;
        let lx = WIDTH - MARGIN_RIGHT - 170.0;
        out.push_str(&format!(
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            escape(&s.label)
        ));
    }
    out.push_str("</svg>\n");

    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> PlotSpec {
        PlotSpec {
            title: "curves".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![
                Series {
                    label: "a".into(),
                    points: vec![(0.0, 0.0), (1.0, 0.5), (2.0, 0.25)],
                },
                Series {
                    label: "b".into(),
                    points: vec![(0.0, 1.0), (2.0, 0.0)],
                },
            ],
            diagonal: false,
        }
    }

    #[test]
    fn writes_one_polyline_per_series() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plot.svg");
        write_line_plot(&path, &spec()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.trim_end().ends_with("</svg>"));
        assert_eq!(text.matches("<polyline").count(), 2);
        assert!(text.contains("curves"));
    }

    #[test]
    fn output_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.svg");
        let b = dir.path().join("b.svg");
        write_line_plot(&a, &spec()).unwrap();
        write_line_plot(&b, &spec()).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn constant_series_gets_padded_range() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flat.svg");
        let flat = PlotSpec {
            series: vec![Series {
                label: "flat".into(),
                points: vec![(0.0, 3.0), (1.0, 3.0)],
            }],
            diagonal: true,
            ..spec()
        };
        write_line_plot(&path, &flat).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("stroke-dasharray"));
    }

    #[test]
    fn rejects_empty_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.svg");
        let empty = PlotSpec {
            series: vec![],
            ..spec()
        };
        assert!(write_line_plot(&path, &empty).is_err());
        let hollow = PlotSpec {
            series: vec![Series {
                label: "x".into(),
                points: vec![],
            }],
            ..spec()
        };
        assert!(write_line_plot(&path, &hollow).is_err());
    }

    #[test]
    fn labels_are_escaped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("esc.svg");
        let mut s = spec();
        s.title = "a < b & c".into();
        write_line_plot(&path, &s).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("a &lt; b &amp; c"));
    }
}
