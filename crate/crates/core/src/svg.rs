//! Minimal SVG line plots: axes, ticks, lines, markers, error bars, a log-y
//! option and vertical markers.

use std::fmt::Write;

pub const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Style {
    #[default]
    Solid,
    Dotted,
    Markers,
    LineMarkers,
}

#[derive(Debug, Clone, Default)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Symmetric error bars, one per point.
    pub errors: Option<Vec<f64>>,
    pub style: Style,
    pub color: Option<String>,
    pub width: f64,
}

impl Series {
    pub fn new(label: impl Into<String>, xs: &[f64], ys: &[f64]) -> Self {
        Self {
            label: label.into(),
            points: xs.iter().copied().zip(ys.iter().copied()).collect(),
            width: 1.6,
            ..Default::default()
        }
    }

    pub fn style(mut self, style: Style) -> Self {
        self.style = style;
        self
    }

    pub fn color(mut self, c: &str) -> Self {
        self.color = Some(c.to_string());
        self
    }

    pub fn width(mut self, w: f64) -> Self {
        self.width = w;
        self
    }

    pub fn errors(mut self, e: Vec<f64>) -> Self {
        self.errors = Some(e);
        self
    }
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
    /// `(x, label)` vertical markers.
    pub vlines: Vec<(f64, String)>,
    pub width: f64,
    pub height: f64,
}

impl Plot {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_y: false,
            series: Vec::new(),
            vlines: Vec::new(),
            width: 720.0,
            height: 460.0,
        }
    }

    pub fn log_y(mut self, on: bool) -> Self {
        self.log_y = on;
        self
    }

    pub fn push(&mut self, s: Series) {
        self.series.push(s);
    }

    pub fn vline(&mut self, x: f64, label: impl Into<String>) {
        self.vlines.push((x, label.into()));
    }

    fn ty(&self, y: f64) -> Option<f64> {
        if self.log_y {
            (y > 0.0).then(|| y.log10())
        } else {
            y.is_finite().then_some(y)
        }
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            for (k, &(x, y)) in s.points.iter().enumerate() {
                let e = s.errors.as_ref().map_or(0.0, |e| e[k].abs());
                for yy in [y - e, y + e] {
                    if let (true, Some(t)) = (x.is_finite(), self.ty(yy)) {
                        x0 = x0.min(x);
                        x1 = x1.max(x);
                        y0 = y0.min(t);
                        y1 = y1.max(t);
                    }
                }
            }
        }
        for &(x, _) in &self.vlines {
            x0 = x0.min(x);
            x1 = x1.max(x);
        }
        if !x0.is_finite() {
            return (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 < 1e-300 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-300 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad = 0.05 * (y1 - y0);
        (x0, x1, y0 - pad, y1 + pad)
    }

    pub fn render(&self) -> String {
        let (w, h) = (self.width, self.height);
        let (ml, mr, mt, mb) = (70.0, 170.0, 40.0, 55.0);
        let (pw, ph) = (w - ml - mr, h - mt - mb);
        let (x0, x1, y0, y1) = self.bounds();
        let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
        let sy = |t: f64| mt + ph - (t - y0) / (y1 - y0) * ph;
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, ml + pw / 2.0, esc(&self.title));
        let _ = writeln!(out, r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        for t in ticks(x0, x1, 6) {
            let x = sx(t);
            let _ = writeln!(out, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, mt + ph, mt + ph + 5.0);
            let _ = writeln!(out, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, mt + ph + 18.0, fmt_tick(t));
        }
        for t in ticks(y0, y1, 6) {
            let y = sy(t);
            let label = if self.log_y { format!("1e{}", fmt_tick(t)) } else { fmt_tick(t) };
            let _ = writeln!(out, r#"<line x1="{:.2}" y1="{y:.2}" x2="{ml}" y2="{y:.2}" stroke="black"/>"#, ml - 5.0);
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, ml - 8.0, y + 4.0);
        }
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, ml + pw / 2.0, h - 12.0, esc(&self.x_label));
        let _ = writeln!(
            out,
            r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            mt + ph / 2.0,
            mt + ph / 2.0,
            esc(&self.y_label)
        );
        for (x, label) in &self.vlines {
            let x = sx(*x);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{mt}" x2="{x:.2}" y2="{:.2}" stroke="#d62728" stroke-dasharray="2,3"/>"##,
                mt + ph
            );
            let _ = writeln!(out, r##"<text x="{:.2}" y="{:.2}" fill="#d62728">{}</text>"##, x + 3.0, mt + 12.0, esc(label));
        }
        for (i, s) in self.series.iter().enumerate() {
            let color = s.color.clone().unwrap_or_else(|| PALETTE[i % PALETTE.len()].to_string());
            let pts: Vec<(f64, f64, usize)> = s
                .points
                .iter()
                .enumerate()
                .filter_map(|(k, &(x, y))| self.ty(y).filter(|_| x.is_finite()).map(|t| (sx(x), sy(t), k)))
                .collect();
            if matches!(s.style, Style::Solid | Style::Dotted | Style::LineMarkers) && pts.len() > 1 {
                let path: Vec<String> = pts.iter().map(|(x, y, _)| format!("{x:.2},{y:.2}")).collect();
                let dash = if s.style == Style::Dotted { r#" stroke-dasharray="3,3""# } else { "" };
                let _ = writeln!(
                    out,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{}"{dash}/>"#,
                    path.join(" "),
                    s.width
                );
            }
            if matches!(s.style, Style::Markers | Style::LineMarkers) {
                for (x, y, _) in &pts {
                    let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
                }
            }
            if let Some(errs) = &s.errors {
                for &(x, _, k) in &pts {
                    let (y, e) = (s.points[k].1, errs[k].abs());
                    if let (Some(a), Some(b)) = (self.ty(y - e), self.ty(y + e)) {
                        let _ = writeln!(
                            out,
                            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}"/>"#,
                            sy(a),
                            sy(b)
                        );
                    }
                }
            }
            let ly = mt + 10.0 + 16.0 * i as f64;
            let lx = ml + pw + 12.0;
            let dash = if s.style == Style::Dotted { r#" stroke-dasharray="3,3""# } else { "" };
            let _ = writeln!(
                out,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>"#,
                lx + 20.0
            );
            let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, lx + 25.0, ly + 4.0, esc(&s.label));
        }
        out.push_str("</svg>\n");
        out
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Round tick positions covering `[lo, hi]`.
pub fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}
