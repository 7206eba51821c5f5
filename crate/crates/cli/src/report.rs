//! Static SVG report: one trace per slice with the selected beats shaded.

use std::fmt::Write;

use respgate_core::heartbeat::SliceBeats;
use respgate_core::RespSignal;

const WIDTH: f64 = 900.0;
const MARGIN: f64 = 60.0;
const PANEL: f64 = 70.0;
const GAP: f64 = 14.0;
const PE_FILL: &str = "#4c9f70";
const PI_FILL: &str = "#d1495b";

pub fn render_report(signals: &[RespSignal], beats: &[SliceBeats], frame_period_s: f64) -> String {
    let frames = signals.first().map_or(0, |s| s.len());
    let height = 2.0 * GAP + 20.0 + signals.len() as f64 * (PANEL + GAP);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let x_of = |f: f64| MARGIN + plot_w * f / (frames.max(2) - 1) as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height:.0}" viewBox="0 0 {WIDTH} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="{:.0}">respiratory signal (up = expiration); shaded: PE beat (green), PI beat (red); {:.2} s total</text>"#,
        GAP + 6.0,
        frames as f64 * frame_period_s
    );

    for (j, signal) in signals.iter().enumerate() {
        let top = GAP + 20.0 + j as f64 * (PANEL + GAP);
        let (lo, hi) = signal
            .values()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let y_of = |v: f64| top + PANEL - PANEL * (v - lo) / span;

        let _ = writeln!(
            svg,
            r##"<rect x="{MARGIN}" y="{top:.1}" width="{plot_w}" height="{PANEL}" fill="none" stroke="#ccc"/>"##
        );
        if let Some(b) = beats.iter().find(|b| b.slice == signal.slice_index()) {
            for (window, fill) in [(b.pe(), PE_FILL), (b.pi(), PI_FILL)] {
                if let Some(w) = window {
                    let x0 = x_of(w.start_frame as f64);
                    let x1 = x_of(w.end_frame as f64);
                    let _ = writeln!(
                        svg,
                        r#"<rect x="{x0:.1}" y="{top:.1}" width="{:.1}" height="{PANEL}" fill="{fill}" fill-opacity="0.25"/>"#,
                        (x1 - x0).max(1.0)
                    );
                }
            }
        }
        let points: Vec<String> = signal
            .values()
            .iter()
            .enumerate()
            .map(|(f, v)| format!("{:.1},{:.1}", x_of(f as f64), y_of(*v)))
            .collect();
        let _ = writeln!(
            svg,
            r##"<polyline fill="none" stroke="#1f3b73" stroke-width="1.2" points="{}"/>"##,
            points.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="8" y="{:.1}">slice {}</text>"#,
            top + PANEL / 2.0 + 4.0,
            signal.slice_index()
        );
    }
    svg.push_str("</svg>\n");
    svg
}
