//! CSV and SVG emission. Floats are written with Rust's shortest-roundtrip
//! `Display`, so identical numbers always produce identical bytes and a
//! re-run diff is meaningful. The SVG writer is a self-contained polyline /
//! scatter plotter: every figure is regenerable from its CSV alone.

use std::fmt::Write as _;

/// Column-checked CSV accumulator.
pub struct CsvBuilder {
    out: String,
    columns: usize,
}

impl CsvBuilder {
    pub fn new(header: &[&str]) -> Self {
        let mut out = String::new();
        out.push_str(&header.join(","));
        out.push('\n');
        CsvBuilder { out, columns: header.len() }
    }

    pub fn push_row(&mut self, fields: &[String]) {
        assert_eq!(fields.len(), self.columns, "CSV row width mismatch");
        self.out.push_str(&fields.join(","));
        self.out.push('\n');
    }

    pub fn into_string(self) -> String {
        self.out
    }
}

pub const PALETTE: [&str; 6] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesStyle {
    Line,
    Scatter,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub style: SeriesStyle,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 880.0;
const HEIGHT: f64 = 560.0;
const ML: f64 = 82.0;
const MR: f64 = 24.0;
const MT: f64 = 46.0;
const MB: f64 = 58.0;

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Plot {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            log_x: false,
            log_y: false,
            series: Vec::new(),
        }
    }

    pub fn line(mut self, name: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series { name: name.to_string(), style: SeriesStyle::Line, points });
        self
    }

    pub fn scatter(mut self, name: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series {
            name: name.to_string(),
            style: SeriesStyle::Scatter,
            points,
        });
        self
    }

    fn usable(&self, (x, y): (f64, f64)) -> bool {
        x.is_finite() && y.is_finite() && (!self.log_x || x > 0.0) && (!self.log_y || y > 0.0)
    }

    pub fn render(&self) -> String {
        let tx = |v: f64| if self.log_x { v.log10() } else { v };
        let ty = |v: f64| if self.log_y { v.log10() } else { v };

        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for s in &self.series {
            for &p in s.points.iter().filter(|&&p| self.usable(p)) {
                xs.push(tx(p.0));
                ys.push(ty(p.1));
            }
        }
        let (xlo, xhi) = padded_range(&xs);
        let (ylo, yhi) = padded_range(&ys);
        let pw = WIDTH - ML - MR;
        let ph = HEIGHT - MT - MB;
        let px = |x: f64| ML + (tx(x) - xlo) / (xhi - xlo) * pw;
        let py = |y: f64| MT + ph - (ty(y) - ylo) / (yhi - ylo) * ph;

        let mut svg = String::new();
        let _ = write!(
            svg,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
        );
        let _ = write!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n");
        let _ = write!(
            svg,
            "<text x=\"{:.1}\" y=\"26\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
            WIDTH / 2.0,
            escape(&self.title)
        );

        // Grid and ticks.
        let xticks =
            if self.log_x { decade_ticks(xlo, xhi) } else { nice_ticks(xlo, xhi, 6) };
        let yticks =
            if self.log_y { decade_ticks(ylo, yhi) } else { nice_ticks(ylo, yhi, 6) };
        for &t in &xticks {
            let x = ML + (t - xlo) / (xhi - xlo) * pw;
            let _ = write!(
                svg,
                "<line x1=\"{x:.2}\" y1=\"{MT}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
                 stroke=\"#dddddd\"/>\n<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\" \
                 font-size=\"12\">{}</text>\n",
                MT + ph,
                MT + ph + 18.0,
                tick_label(t, self.log_x)
            );
        }
        for &t in &yticks {
            let y = MT + ph - (t - ylo) / (yhi - ylo) * ph;
            let _ = write!(
                svg,
                "<line x1=\"{ML}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
                 stroke=\"#dddddd\"/>\n<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" \
                 font-size=\"12\">{}</text>\n",
                ML + pw,
                ML - 8.0,
                y + 4.0,
                tick_label(t, self.log_y)
            );
        }
        let _ = write!(
            svg,
            "<rect x=\"{ML}\" y=\"{MT}\" width=\"{pw:.2}\" height=\"{ph:.2}\" fill=\"none\" \
             stroke=\"#333333\"/>\n"
        );

        // Series.
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            match s.style {
                SeriesStyle::Line => {
                    let mut pts = String::new();
                    for &p in s.points.iter().filter(|&&p| self.usable(p)) {
                        let _ = write!(pts, "{:.2},{:.2} ", px(p.0), py(p.1));
                    }
                    let _ = write!(
                        svg,
                        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" \
                         stroke-width=\"1.8\"/>\n",
                        pts.trim_end()
                    );
                }
                SeriesStyle::Scatter => {
                    for &p in s.points.iter().filter(|&&p| self.usable(p)) {
                        let _ = write!(
                            svg,
                            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.2\" fill=\"{color}\" \
                             fill-opacity=\"0.55\"/>\n",
                            px(p.0),
                            py(p.1)
                        );
                    }
                }
            }
        }

        // Legend, top-right inside the plot area.
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let y = MT + 16.0 + 18.0 * i as f64;
            let x = ML + pw - 170.0;
            match s.style {
                SeriesStyle::Line => {
                    let _ = write!(
                        svg,
                        "<line x1=\"{x:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
                         stroke=\"{color}\" stroke-width=\"2.4\"/>\n",
                        x + 20.0
                    );
                }
                SeriesStyle::Scatter => {
                    let _ = write!(
                        svg,
                        "<circle cx=\"{:.1}\" cy=\"{y:.1}\" r=\"3\" fill=\"{color}\"/>\n",
                        x + 10.0
                    );
                }
            }
            let _ = write!(
                svg,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\">{}</text>\n",
                x + 26.0,
                y + 4.0,
                escape(&s.name)
            );
        }

        // Axis labels.
        let _ = write!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
            ML + pw / 2.0,
            HEIGHT - 14.0,
            escape(&self.x_label)
        );
        let _ = write!(
            svg,
            "<text x=\"20\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\" \
             transform=\"rotate(-90 20 {:.1})\">{}</text>\n",
            MT + ph / 2.0,
            MT + ph / 2.0,
            escape(&self.y_label)
        );
        svg.push_str("</svg>\n");
        svg
    }
}

fn padded_range(v: &[f64]) -> (f64, f64) {
    let (mut lo, mut hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.03 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Round ticks at a 1/2/5 step covering [lo, hi] (transformed coordinates).
fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let raw = (hi - lo) / target.max(2) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = mag
        * if norm <= 1.0 {
            1.0
        } else if norm <= 2.0 {
            2.0
        } else if norm <= 5.0 {
            5.0
        } else {
            10.0
        };
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        // Snap tiny rounding residue so labels print cleanly.
        let snapped = (t / step).round() * step;
        out.push(if snapped.abs() < step * 1e-9 { 0.0 } else { snapped });
        t += step;
    }
    out
}

/// Integer decades inside [lo, hi] (already log10-transformed), thinned to
/// at most eight labels.
fn decade_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let first = lo.ceil() as i64;
    let last = hi.floor() as i64;
    if last < first {
        return vec![lo, hi];
    }
    let n = (last - first + 1) as usize;
    let stride = n.div_ceil(8).max(1) as i64;
    (first..=last).step_by(stride as usize).map(|k| k as f64).collect()
}

fn tick_label(t: f64, log: bool) -> String {
    if log {
        // `t` is an exponent; label the decade itself.
        if t.fract() == 0.0 {
            format!("1e{}", t as i64)
        } else {
            format!("{:.2}", 10f64.powf(t))
        }
    } else {
        format!("{}", (t * 1e10).round() / 1e10)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_builder_checks_width_and_round_trips_floats() {
        let mut csv = CsvBuilder::new(&["a", "b"]);
        csv.push_row(&[0.1f64.to_string(), (1.0f64 / 3.0).to_string()]);
        let text = csv.into_string();
        assert_eq!(text, "a,b\n0.1,0.3333333333333333\n");
        let back: f64 = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(back, 1.0 / 3.0);
    }

    #[test]
    #[should_panic(expected = "width mismatch")]
    fn csv_builder_rejects_ragged_rows() {
        let mut csv = CsvBuilder::new(&["a", "b"]);
        csv.push_row(&["1".to_string()]);
    }

    #[test]
    fn nice_ticks_cover_the_range_evenly() {
        let ticks = nice_ticks(0.0, 1.0, 6);
        assert!(ticks.len() >= 4 && ticks.len() <= 8);
        assert!(ticks.windows(2).all(|w| w[1] > w[0]));
        assert!(*ticks.first().unwrap() >= 0.0 && *ticks.last().unwrap() <= 1.0);
    }

    #[test]
    fn decade_ticks_thin_to_eight_labels() {
        let ticks = decade_ticks(-20.0, 0.0);
        assert!(ticks.len() <= 8);
        assert!(ticks.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn plot_renders_lines_scatter_and_legend() {
        let svg = Plot::new("t", "x", "y")
            .line("a", vec![(0.0, 0.0), (1.0, 1.0)])
            .scatter("b", vec![(0.5, 0.5), (0.7, 0.2)])
            .render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<polyline"));
        assert_eq!(svg.matches("<circle").count(), 2 + 1); // points + legend swatch
        assert!(svg.contains(">a</text>") && svg.contains(">b</text>"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn log_axes_skip_nonpositive_points() {
        let mut plot = Plot::new("t", "x", "y").line("a", vec![(1.0, 0.0), (2.0, 1e-3)]);
        plot.log_y = true;
        let svg = plot.render();
        // Only the positive point survives; the polyline has one coordinate.
        let line = svg.lines().find(|l| l.contains("<polyline")).unwrap();
        assert_eq!(line.matches(',').count(), 1);
    }
}
