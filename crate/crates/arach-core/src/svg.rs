//! Deterministic SVG rendering for evaluation artifacts.
//!
//! Three chart families cover every figure the pipeline emits: line charts
//! (offset sweeps, per-layer sink profiles), stacked-bar panels (attention
//! mass decomposition), and square heatmaps (token-to-token attention).
//! Everything is rendered by hand into a string — no canvas, no templates —
//! so identical inputs always produce byte-identical files.

use std::fmt::Write as _;

/// Stroke used for the reference arm in comparative charts.
pub const COLOR_BASELINE: &str = "#888888";
/// Stroke used for the treatment arm.
pub const COLOR_PRIMARY: &str = "#1f77b4";
/// Stroke used for markers and call-outs.
pub const COLOR_ACCENT: &str = "#d62728";
/// Segment fills for three-way stacked bars, bottom-up.
pub const STACK_COLORS: [&str; 3] = ["#1f77b4", "#ff7f0e", "#2ca02c"];

const CANVAS_W: f64 = 800.0;
const CANVAS_H: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 48.0;
const MARGIN_B: f64 = 56.0;

/// One plotted series in a [`LineChart`].
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: String,
    /// Dashed stroke; used for flat reference lines.
    pub dashed: bool,
    /// Draw a small circle at each point.
    pub markers: bool,
}

impl Series {
    pub fn new(label: &str, points: Vec<(f64, f64)>, color: &str) -> Self {
        Self { label: label.to_string(), points, color: color.to_string(), dashed: false, markers: true }
    }

    pub fn dashed(label: &str, points: Vec<(f64, f64)>, color: &str) -> Self {
        Self { label: label.to_string(), points, color: color.to_string(), dashed: true, markers: false }
    }
}

/// A 2-D line chart with optional vertical marker line.
#[derive(Debug, Clone)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Vertical dashed marker at a given x, with a short label near the top.
    pub vline: Option<(f64, String)>,
}

impl LineChart {
    /// Render the chart to a standalone SVG document.
    pub fn render(&self) -> String {
        let (xmin, xmax, ymin, ymax) = self.ranges();
        let plot_w = CANVAS_W - MARGIN_L - MARGIN_R;
        let plot_h = CANVAS_H - MARGIN_T - MARGIN_B;
        let px = |x: f64| MARGIN_L + (x - xmin) / (xmax - xmin) * plot_w;
        let py = |y: f64| MARGIN_T + (1.0 - (y - ymin) / (ymax - ymin)) * plot_h;

        let mut out = svg_open(CANVAS_W, CANVAS_H);
        title_text(&mut out, &self.title);

        // Gridlines and tick labels on both axes, five ticks each.
        for i in 0..5 {
            let ty = ymin + (ymax - ymin) * f64::from(i) / 4.0;
            let y = py(ty);
            let _ = writeln!(
                out,
                r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e0e0e0" stroke-width="1"/>"##,
                MARGIN_L,
                CANVAS_W - MARGIN_R,
            );
            let _ = writeln!(
                out,
                r##"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end" fill="#333">{}</text>"##,
                MARGIN_L - 6.0,
                y + 4.0,
                fmt_tick(ty),
            );
            let tx = xmin + (xmax - xmin) * f64::from(i) / 4.0;
            let x = px(tx);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#e0e0e0" stroke-width="1"/>"##,
                MARGIN_T,
                CANVAS_H - MARGIN_B,
            );
            let _ = writeln!(
                out,
                r##"<text x="{x:.1}" y="{:.1}" font-size="11" text-anchor="middle" fill="#333">{}</text>"##,
                CANVAS_H - MARGIN_B + 16.0,
                fmt_tick(tx),
            );
        }
        axes_frame(&mut out);
        axis_labels(&mut out, &self.x_label, &self.y_label);

        if let Some((x, label)) = &self.vline {
            let x = px(*x);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="{COLOR_ACCENT}" stroke-width="1.5" stroke-dasharray="4 3"/>"##,
                MARGIN_T,
                CANVAS_H - MARGIN_B,
            );
            let _ = writeln!(
                out,
                r##"<text x="{:.1}" y="{:.1}" font-size="11" fill="{COLOR_ACCENT}">{}</text>"##,
                x + 5.0,
                MARGIN_T + 12.0,
                esc(label),
            );
        }

        for s in &self.series {
            if s.points.is_empty() {
                continue;
            }
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let mut path = String::new();
            for (i, (x, y)) in s.points.iter().enumerate() {
                let cmd = if i == 0 { 'M' } else { 'L' };
                let _ = write!(path, "{cmd}{:.1} {:.1} ", px(*x), py(*y));
            }
            let _ = writeln!(
                out,
                r##"<path d="{}" fill="none" stroke="{}" stroke-width="2"{dash}/>"##,
                path.trim_end(),
                s.color,
            );
            if s.markers {
                for (x, y) in &s.points {
                    let _ = writeln!(
                        out,
                        r##"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{}"/>"##,
                        px(*x),
                        py(*y),
                        s.color,
                    );
                }
            }
        }

        // Legend: one row per series, top-right corner of the plot area.
        for (i, s) in self.series.iter().enumerate() {
            let ly = MARGIN_T + 14.0 + 16.0 * i as f64;
            let lx = CANVAS_W - MARGIN_R - 150.0;
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                out,
                r##"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"{dash}/>"##,
                lx + 24.0,
                s.color,
            );
            let _ = writeln!(
                out,
                r##"<text x="{:.1}" y="{:.1}" font-size="11" fill="#333">{}</text>"##,
                lx + 30.0,
                ly + 4.0,
                esc(&s.label),
            );
        }

        out.push_str("</svg>\n");
        out
    }

    fn ranges(&self) -> (f64, f64, f64, f64) {
        let mut xmin = f64::INFINITY;
        let mut xmax = f64::NEG_INFINITY;
        let mut ymin = f64::INFINITY;
        let mut ymax = f64::NEG_INFINITY;
        for s in &self.series {
            for &(x, y) in &s.points {
                xmin = xmin.min(x);
                xmax = xmax.max(x);
                ymin = ymin.min(y);
                ymax = ymax.max(y);
            }
        }
        if let Some((x, _)) = &self.vline {
            xmin = xmin.min(*x);
            xmax = xmax.max(*x);
        }
        if !xmin.is_finite() {
            (xmin, xmax, ymin, ymax) = (0.0, 1.0, 0.0, 1.0);
        }
        // Pad degenerate or tight ranges so strokes stay inside the frame.
        if xmax - xmin < 1e-12 {
            xmin -= 0.5;
            xmax += 0.5;
        }
        if ymax - ymin < 1e-12 {
            let pad = if ymax.abs() > 1e-12 { ymax.abs() * 0.1 } else { 0.5 };
            ymin -= pad;
            ymax += pad;
        } else {
            let pad = (ymax - ymin) * 0.08;
            ymin -= pad;
            ymax += pad;
        }
        (xmin, xmax, ymin, ymax)
    }
}

/// One panel of a [`StackedBars`] figure: a titled group of unit-height bars.
#[derive(Debug, Clone)]
pub struct StackPanel {
    pub title: String,
    /// Per bar (x position), the per-category fractions bottom-up.
    pub bars: Vec<Vec<f64>>,
}

/// Side-by-side panels of stacked fraction bars sharing a `[0, 1]` y axis.
#[derive(Debug, Clone)]
pub struct StackedBars {
    pub title: String,
    pub x_label: String,
    pub categories: Vec<String>,
    pub panels: Vec<StackPanel>,
}

impl StackedBars {
    /// Render the figure to a standalone SVG document.
    pub fn render(&self) -> String {
        let mut out = svg_open(CANVAS_W, CANVAS_H);
        title_text(&mut out, &self.title);

        let plot_h = CANVAS_H - MARGIN_T - MARGIN_B;
        let gap = 40.0;
        let n_panels = self.panels.len().max(1) as f64;
        let panel_w = (CANVAS_W - MARGIN_L - MARGIN_R - gap * (n_panels - 1.0)) / n_panels;

        // Shared y axis: ticks at 0, 0.25, …, 1.0 on the left edge only.
        for i in 0..5 {
            let frac = f64::from(i) / 4.0;
            let y = MARGIN_T + (1.0 - frac) * plot_h;
            let _ = writeln!(
                out,
                r##"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end" fill="#333">{}</text>"##,
                MARGIN_L - 6.0,
                y + 4.0,
                fmt_tick(frac),
            );
        }

        for (p, panel) in self.panels.iter().enumerate() {
            let x0 = MARGIN_L + (panel_w + gap) * p as f64;
            let _ = writeln!(
                out,
                r##"<rect x="{x0:.1}" y="{:.1}" width="{panel_w:.1}" height="{plot_h:.1}" fill="none" stroke="#333" stroke-width="1"/>"##,
                MARGIN_T,
            );
            let _ = writeln!(
                out,
                r##"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle" fill="#333">{}</text>"##,
                x0 + panel_w / 2.0,
                MARGIN_T - 8.0,
                esc(&panel.title),
            );
            let n_bars = panel.bars.len().max(1) as f64;
            let slot = panel_w / n_bars;
            let bar_w = slot * 0.8;
            for (i, fractions) in panel.bars.iter().enumerate() {
                let bx = x0 + slot * i as f64 + (slot - bar_w) / 2.0;
                let mut base = 0.0;
                for (c, &f) in fractions.iter().enumerate() {
                    let h = f.clamp(0.0, 1.0) * plot_h;
                    let by = MARGIN_T + (1.0 - base - f.clamp(0.0, 1.0)) * plot_h;
                    let color = STACK_COLORS[c % STACK_COLORS.len()];
                    let _ = writeln!(
                        out,
                        r##"<rect x="{bx:.1}" y="{by:.1}" width="{bar_w:.1}" height="{h:.1}" fill="{color}"/>"##,
                    );
                    base += f;
                }
                let _ = writeln!(
                    out,
                    r##"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="middle" fill="#333">{}</text>"##,
                    bx + bar_w / 2.0,
                    MARGIN_T + plot_h + 12.0,
                    i,
                );
            }
            let _ = writeln!(
                out,
                r##"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle" fill="#333">{}</text>"##,
                x0 + panel_w / 2.0,
                CANVAS_H - 18.0,
                esc(&self.x_label),
            );
        }

        // Legend along the top edge, one swatch per category.
        let mut lx = MARGIN_L;
        for (c, cat) in self.categories.iter().enumerate() {
            let color = STACK_COLORS[c % STACK_COLORS.len()];
            let _ = writeln!(
                out,
                r##"<rect x="{lx:.1}" y="10.0" width="12" height="12" fill="{color}"/>"##,
            );
            let _ = writeln!(
                out,
                r##"<text x="{:.1}" y="20.0" font-size="11" fill="#333">{}</text>"##,
                lx + 16.0,
                esc(cat),
            );
            lx += 18.0 + 8.0 * cat.len() as f64 + 20.0;
        }

        out.push_str("</svg>\n");
        out
    }
}

/// A square heatmap with optional seam marker between index blocks.
#[derive(Debug, Clone)]
pub struct HeatmapChart {
    pub title: String,
    /// Row-major `size × size` cell values.
    pub values: Vec<f64>,
    pub size: usize,
    /// Original index labels for each row/column.
    pub indices: Vec<usize>,
    /// When the indices jump (first block | last block), the boundary offset.
    pub seam: Option<usize>,
    /// Shared color-scale ceiling; defaults to the data maximum.
    pub max_value: Option<f64>,
}

impl HeatmapChart {
    /// Render the heatmap to a standalone SVG document.
    ///
    /// Panics if `values` or `indices` disagree with `size`; the chart is
    /// internal plumbing and a mismatch is a caller bug, not bad input data.
    pub fn render(&self) -> String {
        assert_eq!(self.values.len(), self.size * self.size, "heatmap cell count");
        assert_eq!(self.indices.len(), self.size, "heatmap index labels");
        let side = 560.0;
        let x0 = 90.0;
        let y0 = 48.0;
        let w = x0 + side + 120.0;
        let h = y0 + side + 60.0;
        let cell = side / self.size.max(1) as f64;
        let vmax = self
            .max_value
            .unwrap_or_else(|| self.values.iter().copied().fold(0.0_f64, f64::max))
            .max(1e-12);

        let mut out = svg_open(w, h);
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="24.0" font-size="16" text-anchor="middle" fill="#111">{}</text>"##,
            x0 + side / 2.0,
            esc(&self.title),
        );

        for r in 0..self.size {
            for c in 0..self.size {
                let t = (self.values[r * self.size + c] / vmax).clamp(0.0, 1.0);
                let _ = writeln!(
                    out,
                    r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"##,
                    x0 + cell * c as f64,
                    y0 + cell * r as f64,
                    cell,
                    cell,
                    ramp_color(t),
                );
            }
        }
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.1}" y="{y0:.1}" width="{side:.1}" height="{side:.1}" fill="none" stroke="#333" stroke-width="1"/>"##,
        );

        if let Some(seam) = self.seam {
            let off = cell * seam as f64;
            let _ = writeln!(
                out,
                r##"<line x1="{:.1}" y1="{y0:.1}" x2="{:.1}" y2="{:.1}" stroke="{COLOR_ACCENT}" stroke-width="1.5" stroke-dasharray="4 3"/>"##,
                x0 + off,
                x0 + off,
                y0 + side,
            );
            let _ = writeln!(
                out,
                r##"<line x1="{x0:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{COLOR_ACCENT}" stroke-width="1.5" stroke-dasharray="4 3"/>"##,
                y0 + off,
                x0 + side,
                y0 + off,
            );
        }

        // Corner (and seam-adjacent) index labels; labelling every cell would
        // be unreadable at realistic sizes.
        let mut labelled: Vec<usize> = vec![0, self.size - 1];
        if let Some(seam) = self.seam {
            if seam > 0 && seam < self.size {
                labelled.push(seam - 1);
                labelled.push(seam);
            }
        }
        labelled.sort_unstable();
        labelled.dedup();
        for &i in &labelled {
            let mid = cell * (i as f64 + 0.5);
            let _ = writeln!(
                out,
                r##"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle" fill="#333">{}</text>"##,
                x0 + mid,
                y0 + side + 14.0,
                self.indices[i],
            );
            let _ = writeln!(
                out,
                r##"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end" fill="#333">{}</text>"##,
                x0 - 5.0,
                y0 + mid + 3.0,
                self.indices[i],
            );
        }

        // Vertical color-scale bar with min/max annotations.
        let bar_x = x0 + side + 30.0;
        let steps = 64;
        let step_h = side / steps as f64;
        for s in 0..steps {
            let t = 1.0 - (s as f64 + 0.5) / steps as f64;
            let _ = writeln!(
                out,
                r##"<rect x="{bar_x:.1}" y="{:.2}" width="16" height="{:.2}" fill="{}"/>"##,
                y0 + step_h * s as f64,
                step_h + 0.5,
                ramp_color(t),
            );
        }
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" font-size="10" fill="#333">{}</text>"##,
            bar_x + 20.0,
            y0 + 8.0,
            fmt_tick(vmax),
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" font-size="10" fill="#333">0</text>"##,
            bar_x + 20.0,
            y0 + side,
        );

        out.push_str("</svg>\n");
        out
    }
}

/// Map `t ∈ [0, 1]` onto a white-to-dark-blue ramp as a hex color.
pub fn ramp_color(t: f64) -> String {
    const ANCHORS: [(f64, [f64; 3]); 5] = [
        (0.00, [255.0, 255.0, 255.0]),
        (0.25, [198.0, 219.0, 239.0]),
        (0.50, [107.0, 174.0, 214.0]),
        (0.75, [33.0, 113.0, 181.0]),
        (1.00, [8.0, 48.0, 107.0]),
    ];
    let t = t.clamp(0.0, 1.0);
    let mut rgb = ANCHORS[ANCHORS.len() - 1].1;
    for w in ANCHORS.windows(2) {
        let (t0, c0) = w[0];
        let (t1, c1) = w[1];
        if t <= t1 {
            let f = if t1 - t0 > 0.0 { (t - t0) / (t1 - t0) } else { 0.0 };
            rgb = [
                c0[0] + (c1[0] - c0[0]) * f,
                c0[1] + (c1[1] - c0[1]) * f,
                c0[2] + (c1[2] - c0[2]) * f,
            ];
            break;
        }
    }
    format!(
        "#{:02x}{:02x}{:02x}",
        rgb[0].round() as u8,
        rgb[1].round() as u8,
        rgb[2].round() as u8
    )
}

/// Format an axis tick: integers bare, fractions trimmed to ≤4 decimals.
fn fmt_tick(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e9 {
        format!("{}", v as i64)
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Escape the five XML-special characters in label text.
fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn svg_open(w: f64, h: f64) -> String {
    format!(
        concat!(
            r##"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" "##,
            r##"viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif">"##,
            "\n",
            r##"<rect width="{w:.0}" height="{h:.0}" fill="white"/>"##,
            "\n"
        ),
        w = w,
        h = h
    )
}

fn title_text(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r##"<text x="{:.1}" y="24.0" font-size="16" text-anchor="middle" fill="#111">{}</text>"##,
        CANVAS_W / 2.0,
        esc(title),
    );
}

fn axes_frame(out: &mut String) {
    let _ = writeln!(
        out,
        r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333" stroke-width="1"/>"##,
        MARGIN_L,
        MARGIN_T,
        CANVAS_W - MARGIN_L - MARGIN_R,
        CANVAS_H - MARGIN_T - MARGIN_B,
    );
}

fn axis_labels(out: &mut String, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r##"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle" fill="#333">{}</text>"##,
        MARGIN_L + (CANVAS_W - MARGIN_L - MARGIN_R) / 2.0,
        CANVAS_H - 14.0,
        esc(x_label),
    );
    let cy = MARGIN_T + (CANVAS_H - MARGIN_T - MARGIN_B) / 2.0;
    let _ = writeln!(
        out,
        r##"<text x="18.0" y="{cy:.1}" font-size="12" text-anchor="middle" fill="#333" transform="rotate(-90 18.0 {cy:.1})">{}</text>"##,
        esc(y_label),
    );
}
