//! SVG figures: per-class precision/recall panels and per-frame confidence
//! traces before and after suppression.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::data::{EventClass, TrackedMatch};
use crate::evaluator::{EvalError, EvalReport, PrCurve};
use crate::spotter::{spot, ConfidenceCurve, SpotError};

#[derive(Debug, Error)]
pub enum PlotError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Spot(#[from] SpotError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

const PR_COLS: usize = 4;
const PR_W: f64 = 240.0;
const PR_H: f64 = 200.0;
const TRACE_W: f64 = 320.0;
const TRACE_H: f64 = 90.0;
const MARGIN_L: f64 = 36.0;
const MARGIN_R: f64 = 10.0;
const MARGIN_T: f64 = 22.0;
const MARGIN_B: f64 = 24.0;

/// Where an inner plot area sits inside a panel.
#[derive(Clone, Copy)]
struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
}

impl Frame {
    fn new(left: f64, top: f64, panel_w: f64, panel_h: f64) -> Self {
        Self {
            x0: left + MARGIN_L,
            y0: top + MARGIN_T,
            w: panel_w - MARGIN_L - MARGIN_R,
            h: panel_h - MARGIN_T - MARGIN_B,
        }
    }

    /// Maps unit coordinates (clamped to `[0, 1]`) to pixels.
    fn at(&self, u: f64, v: f64) -> (f64, f64) {
        let (u, v) = (u.clamp(0.0, 1.0), v.clamp(0.0, 1.0));
        (self.x0 + u * self.w, self.y0 + (1.0 - v) * self.h)
    }

    fn axes(&self, svg: &mut String, x_label: &str, y_label: &str, x_max: f64) {
        let y1 = self.y0 + self.h;
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444" stroke-width="0.8"/>"##,
            self.x0, self.y0, self.w, self.h
        );
        for (i, t) in [0.0, 0.5, 1.0].iter().enumerate() {
            let (x, _) = self.at(*t, 0.0);
            let (_, y) = self.at(0.0, *t);
            let anchor = ["start", "middle", "end"][i];
            let _ = writeln!(
                svg,
                r#"<text x="{x:.2}" y="{:.2}" font-size="8" text-anchor="{anchor}">{}</text>"#,
                y1 + 10.0,
                fmt_tick(t * x_max)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="8" text-anchor="end">{}</text>"#,
                self.x0 - 3.0,
                y + 3.0,
                fmt_tick(*t)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="8" text-anchor="middle">{x_label}</text>"#,
            self.x0 + self.w / 2.0,
            y1 + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="8" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{y_label}</text>"#,
            self.x0 - 24.0,
            self.y0 + self.h / 2.0,
            self.x0 - 24.0,
            self.y0 + self.h / 2.0
        );
    }
}

fn fmt_tick(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.1}")
    }
}

fn header(svg: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Interpolated precision (best precision at recall at least `r`) as a
/// step outline from recall 0 to the largest recall reached. Thresholds with
/// no passing prediction are skipped.
fn pr_envelope(curve: &PrCurve) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|p| p.n_pred > 0)
        .map(|p| (p.recall, p.precision))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    pts.dedup();
    let mut steps: Vec<(f64, f64)> = Vec::new();
    // sweep from the highest recall down, tracking the running best precision
    let mut best = 0.0f64;
    for &(r, p) in pts.iter().rev() {
        best = best.max(p);
        steps.push((r, best));
    }
    steps.reverse();
    let mut outline = Vec::new();
    let mut from = 0.0;
    for &(r, p) in &steps {
        outline.push((from, p));
        outline.push((r, p));
        from = r;
    }
    outline.dedup();
    outline
}

/// One panel per class with the precision/recall curve at `delta_s`.
pub fn render_pr(
    report: &EvalReport,
    delta_s: f64,
    classes: Option<&[EventClass]>,
) -> Result<String, PlotError> {
    let curves = report.curves_at(delta_s)?;
    let shown: Vec<&PrCurve> = curves
        .into_iter()
        .filter(|c| classes.is_none_or(|f| f.contains(&c.class)))
        .collect();
    let rows = shown.len().div_ceil(PR_COLS).max(1);
    let cols = shown.len().clamp(1, PR_COLS);
    let (width, height) = (cols as f64 * PR_W, rows as f64 * PR_H + 24.0);
    let mut svg = String::new();
    header(&mut svg, width, height);
    let _ = writeln!(
        svg,
        r#"<text x="8" y="16" font-size="12">Precision/recall per class, tolerance {} s</text>"#,
        fmt_tick(delta_s)
    );
    for (i, curve) in shown.iter().enumerate() {
        let (col, row) = (i % PR_COLS, i / PR_COLS);
        let frame = Frame::new(col as f64 * PR_W, 24.0 + row as f64 * PR_H, PR_W, PR_H);
        let report_class = report.classes.iter().find(|c| c.class == curve.class);
        let excluded = report_class.is_some_and(|c| c.n_gt == 0);
        let _ = writeln!(
            svg,
            r#"<g class="panel" data-class="{}">"#,
            curve.class.name()
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="10">{}</text>"#,
            frame.x0,
            frame.y0 - 6.0,
            escape(curve.class.title())
        );
        frame.axes(&mut svg, "recall", "precision", 1.0);
        let outline = pr_envelope(curve);
        if !outline.is_empty() {
            let pts: Vec<String> = outline
                .iter()
                .map(|&(r, p)| {
                    let (x, y) = frame.at(r, p);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(
                svg,
                r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>"##,
                pts.join(" ")
            );
        }
        for p in curve.points.iter().filter(|p| p.n_pred > 0) {
            let (x, y) = frame.at(p.recall, p.precision);
            let _ = writeln!(
                svg,
                r##"<circle cx="{x:.2}" cy="{y:.2}" r="1.2" fill="#1f77b4"/>"##
            );
        }
        let legend = if excluded {
            "no ground truth".to_string()
        } else {
            format!("AP = {:.3}", curve.ap)
        };
        let _ = writeln!(
            svg,
            r#"<text class="legend" x="{:.2}" y="{:.2}" font-size="9" text-anchor="end">{legend}</text>"#,
            frame.x0 + frame.w - 4.0,
            frame.y0 + frame.h - 6.0
        );
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Suppression settings for the confidence figure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSettings {
    pub nms_window_s: f64,
    pub threshold: f64,
}

impl Default for TraceSettings {
    fn default() -> Self {
        Self {
            nms_window_s: crate::spotter::DEFAULT_NMS_WINDOW_S,
            threshold: crate::spotter::DEFAULT_CONF_THRESHOLD,
        }
    }
}

/// Ground-truth `(class, time_s)` pairs of a match.
pub fn event_times(m: &TrackedMatch) -> Vec<(EventClass, f64)> {
    m.events
        .iter()
        .map(|e| (e.class, m.time_of(e.frame_index)))
        .collect()
}

/// A row per class with three columns: the raw per-frame trace, the peaks
/// kept by NMS alone, and the peaks kept by NMS plus the threshold. Ground
/// truth is marked in every column.
pub fn render_confidence(
    curve: &ConfidenceCurve,
    events: &[(EventClass, f64)],
    settings: TraceSettings,
    classes: Option<&[EventClass]>,
) -> Result<String, PlotError> {
    let nms_only = spot(curve, 0.0, settings.nms_window_s)?;
    let nms_thr = spot(curve, settings.threshold, settings.nms_window_s)?;
    let shown: Vec<EventClass> = EventClass::ALL
        .into_iter()
        .filter(|c| classes.is_none_or(|f| f.contains(c)))
        .collect();
    let t_end = curve
        .times_s
        .iter()
        .chain(events.iter().map(|(_, t)| t))
        .fold(0.0f64, |a, &b| a.max(b))
        .max(1.0);
    let (width, height) = (3.0 * TRACE_W, shown.len().max(1) as f64 * TRACE_H + 40.0);
    let mut svg = String::new();
    header(&mut svg, width, height);
    let titles = [
        "raw per-frame confidence".to_string(),
        format!("NMS ({} s)", fmt_tick(settings.nms_window_s)),
        format!(
            "NMS ({} s) + threshold {}",
            fmt_tick(settings.nms_window_s),
            settings.threshold
        ),
    ];
    for (k, title) in titles.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="16" font-size="12">{}</text>"#,
            k as f64 * TRACE_W + MARGIN_L,
            escape(title)
        );
    }
    for (row, &class) in shown.iter().enumerate() {
        let c = class.index();
        let _ = writeln!(svg, r#"<g class="row" data-class="{}">"#, class.name());
        for col in 0..3 {
            let frame = Frame::new(
                col as f64 * TRACE_W,
                24.0 + row as f64 * TRACE_H,
                TRACE_W,
                TRACE_H,
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="9">{}</text>"#,
                frame.x0,
                frame.y0 - 4.0,
                escape(class.title())
            );
            frame.axes(&mut svg, "time (s)", "conf", t_end);
            for (_, t) in events.iter().filter(|(ec, _)| *ec == class) {
                let (x, ytop) = frame.at(t / t_end, 1.0);
                let (_, ybot) = frame.at(0.0, 0.0);
                let _ = writeln!(
                    svg,
                    r##"<line class="gt" x1="{x:.2}" y1="{ytop:.2}" x2="{x:.2}" y2="{ybot:.2}" stroke="#2ca02c" stroke-width="1" stroke-dasharray="3,2"/>"##
                );
            }
            match col {
                0 => {
                    if !curve.is_empty() {
                        let pts: Vec<String> = curve
                            .times_s
                            .iter()
                            .zip(&curve.probs)
                            .map(|(t, p)| {
                                let (x, y) = frame.at(t / t_end, p[c]);
                                format!("{x:.2},{y:.2}")
                            })
                            .collect();
                        let _ = writeln!(
                            svg,
                            r##"<polyline class="trace" points="{}" fill="none" stroke="#1f77b4" stroke-width="0.8"/>"##,
                            pts.join(" ")
                        );
                    }
                }
                _ => {
                    let preds = if col == 1 { &nms_only } else { &nms_thr };
                    if col == 2 {
                        let (x0, y) = frame.at(0.0, settings.threshold);
                        let (x1, _) = frame.at(1.0, settings.threshold);
                        let _ = writeln!(
                            svg,
                            r##"<line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="#999" stroke-width="0.6" stroke-dasharray="2,2"/>"##
                        );
                    }
                    for p in preds.iter().filter(|p| p.class == class) {
                        let (x, y) = frame.at(p.time_s / t_end, p.confidence);
                        let (_, ybot) = frame.at(0.0, 0.0);
                        let _ = writeln!(
                            svg,
                            r##"<line class="spike" x1="{x:.2}" y1="{ybot:.2}" x2="{x:.2}" y2="{y:.2}" stroke="#d62728" stroke-width="1.2"/>"##
                        );
                    }
                }
            }
        }
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn save(svg: &str, path: &Path) -> Result<(), PlotError> {
    std::fs::write(path, svg)?;
    Ok(())
}
