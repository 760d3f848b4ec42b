use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::results::{best_hyperparameters, read_results_csv};
use crate::error::{Result, ScoreError};

/// Which column goes on the horizontal axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotAxis {
    Dimension,
    SampleSize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub x: PlotAxis,
    pub log_x: bool,
    pub log_y: bool,
    pub title: String,
    pub width: u32,
    pub height: u32,
}

impl Default for PlotSpec {
    fn default() -> Self {
        PlotSpec { x: PlotAxis::Dimension, log_x: false, log_y: true, title: String::new(), width: 640, height: 400 }
    }
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

/// One named line: `(x, y)` points in increasing `x`.
pub type Series = (String, Vec<(f64, f64)>);

/// Best-hyperparameter median error per estimator, against d or M. When the
/// other axis has several values each gets its own series.
pub fn series_from_results(csv_text: &str, axis: PlotAxis) -> Result<Vec<Series>> {
    let rows = read_results_csv(csv_text.as_bytes())?;
    let best = best_hyperparameters(&rows);
    let mut others: BTreeMap<&str, std::collections::BTreeSet<usize>> = BTreeMap::new();
    for b in &best {
        let other = match axis {
            PlotAxis::Dimension => b.m,
            PlotAxis::SampleSize => b.d,
        };
        others.entry(b.estimator.as_str()).or_default().insert(other);
    }
    let mut order: Vec<String> = Vec::new();
    let mut lines: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for b in &best {
        let (x, other, tag) = match axis {
            PlotAxis::Dimension => (b.d, b.m, "M"),
            PlotAxis::SampleSize => (b.m, b.d, "d"),
        };
        let name = if others[b.estimator.as_str()].len() > 1 {
            format!("{} ({tag}={other})", b.estimator)
        } else {
            b.estimator.clone()
        };
        if !lines.contains_key(&name) {
            order.push(name.clone());
        }
        let pts = lines.entry(name).or_default();
        if b.median_error.is_finite() {
            pts.push((x as f64, b.median_error));
        }
    }
    Ok(order
        .into_iter()
        .map(|n| {
            let mut pts = lines.remove(&n).unwrap_or_default();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            (n, pts)
        })
        .collect())
}

/// Renders a results CSV as an SVG line chart.
pub fn emit_plot(csv_text: &str, spec: &PlotSpec) -> Result<String> {
    let series = series_from_results(csv_text, spec.x)?;
    render_svg(&series, spec)
}

struct Scale {
    lo: f64,
    hi: f64,
    log: bool,
    px_lo: f64,
    px_hi: f64,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, log: bool, px_lo: f64, px_hi: f64) -> Self {
        let vals: Vec<f64> = values.filter(|v| v.is_finite() && (!log || *v > 0.0)).collect();
        let (mut lo, mut hi) = if vals.is_empty() {
            if log { (1.0, 10.0) } else { (0.0, 1.0) }
        } else {
            (vals.iter().copied().fold(f64::INFINITY, f64::min), vals.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        };
        if log {
            lo = 10f64.powf(lo.log10().floor());
            hi = 10f64.powf(hi.log10().ceil());
            if hi <= lo {
                hi = lo * 10.0;
            }
        } else if hi <= lo {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.5 };
            lo -= pad;
            hi += pad;
        }
        Scale { lo, hi, log, px_lo, px_hi }
    }

    fn map(&self, v: f64) -> f64 {
        let t = if self.log {
            (v.log10() - self.lo.log10()) / (self.hi.log10() - self.lo.log10())
        } else {
            (v - self.lo) / (self.hi - self.lo)
        };
        self.px_lo + t * (self.px_hi - self.px_lo)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.log10().round() as i32, self.hi.log10().round() as i32);
            (a..=b).map(|k| 10f64.powi(k)).collect()
        } else {
            (0..=4).map(|i| self.lo + (self.hi - self.lo) * i as f64 / 4.0).collect()
        }
    }
}

fn label(v: f64, log: bool) -> String {
    if log {
        format!("1e{}", v.log10().round() as i32)
    } else if v.fract() == 0.0 && v.abs() < 1e6 {
        format!("{}", v as i64)
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Deterministic SVG: fixed layout, coordinates with two decimals.
pub fn render_svg(series: &[Series], spec: &PlotSpec) -> Result<String> {
    if spec.width < 300 || spec.height < 200 {
        return Err(ScoreError::input("plot must be at least 300x200"));
    }
    let (w, h) = (spec.width as f64, spec.height as f64);
    let xs = Scale::new(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)), spec.log_x, MARGIN_L, w - MARGIN_R);
    let ys = Scale::new(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)), spec.log_y, h - MARGIN_B, MARGIN_T);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="12">"#, spec.width, spec.height, spec.width, spec.height);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if !spec.title.is_empty() {
        let _ = writeln!(out, r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#, (MARGIN_L + w - MARGIN_R) / 2.0, escape(&spec.title));
    }
    // axes
    let _ = writeln!(out, r#"<g stroke="black" stroke-width="1"><line x1="{l:.2}" y1="{b:.2}" x2="{r:.2}" y2="{b:.2}"/><line x1="{l:.2}" y1="{t:.2}" x2="{l:.2}" y2="{b:.2}"/></g>"#, l = MARGIN_L, r = w - MARGIN_R, t = MARGIN_T, b = h - MARGIN_B);
    for t in xs.ticks() {
        let x = xs.map(t);
        let _ = writeln!(out, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, h - MARGIN_B, h - MARGIN_B + 5.0, h - MARGIN_B + 19.0, label(t, xs.log));
    }
    for t in ys.ticks() {
        let y = ys.map(t);
        let _ = writeln!(out, r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, MARGIN_L - 5.0, MARGIN_L, MARGIN_L - 8.0, y + 4.0, label(t, ys.log));
    }
    let x_name = match spec.x {
        PlotAxis::Dimension => "dimension d",
        PlotAxis::SampleSize => "sample size M",
    };
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_name}</text>"#, (MARGIN_L + w - MARGIN_R) / 2.0, h - 12.0);
    let _ = writeln!(out, r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">normalized error</text>"#, (MARGIN_T + h - MARGIN_B) / 2.0, (MARGIN_T + h - MARGIN_B) / 2.0);
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let usable: Vec<(f64, f64)> = pts
            .iter()
            .copied()
            .filter(|&(x, y)| x.is_finite() && y.is_finite() && (!spec.log_x || x > 0.0) && (!spec.log_y || y > 0.0))
            .collect();
        if !usable.is_empty() {
            let coords: Vec<String> = usable.iter().map(|&(x, y)| format!("{:.2},{:.2}", xs.map(x), ys.map(y))).collect();
            let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, coords.join(" "));
            for &(x, y) in &usable {
                let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, xs.map(x), ys.map(y));
            }
        }
        let ly = MARGIN_T + 10.0 + 18.0 * i as f64;
        let lx = w - MARGIN_R + 12.0;
        let _ = writeln!(out, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#, lx + 20.0, lx + 25.0, ly + 4.0, escape(name));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_gives_bare_axes() {
        let svg = emit_plot("estimator,scheme,kernel,d,m,param,value,seed,error,reason\n", &PlotSpec::default()).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(!svg.contains("<polyline"));
    }

    #[test]
    fn two_points_give_one_two_vertex_polyline() {
        let svg = render_svg(&[("a".into(), vec![(1.0, 0.5), (2.0, 0.25)])], &PlotSpec::default()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 2);
    }

    #[test]
    fn malformed_csv_names_the_line() {
        let text = "estimator,scheme,kernel,d,m,param,value,seed,error,reason\na,s,k,x,2,lambda,1,0,0.5,\n";
        let err = emit_plot(text, &PlotSpec::default()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
