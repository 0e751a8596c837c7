//! Minimal static SVG line charts (rate vs n, one polyline per scheme).
//! No external renderer; the output is a plain standalone SVG document.

use crate::simulate::StudyResult;
use std::collections::BTreeMap;
use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 130.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Render rejection rate against sample size, one line per scheme, with a
/// dashed reference line at `gamma`.
pub fn study_chart(result: &StudyResult, gamma: f64, title: &str) -> String {
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let mut n_min = f64::INFINITY;
    let mut n_max = f64::NEG_INFINITY;
    for cell in &result.cells {
        n_min = n_min.min(cell.n as f64);
        n_max = n_max.max(cell.n as f64);
        series
            .entry(cell.scheme.to_string())
            .or_default()
            .push((cell.n as f64, cell.rate));
    }
    if !n_min.is_finite() || n_max <= 0.0 {
        n_min = 0.0;
        n_max = 1.0;
    }
    if (n_max - n_min).abs() < 1e-9 {
        n_min -= 1.0;
        n_max += 1.0;
    }
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let x = |n: f64| MARGIN_L + (n - n_min) / (n_max - n_min) * plot_w;
    let y = |rate: f64| MARGIN_T + (1.0 - rate.clamp(0.0, 1.0)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        MARGIN_L + plot_w / 2.0,
        title
    );
    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN_L}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        MARGIN_T + plot_h,
        MARGIN_L + plot_w,
        MARGIN_T + plot_h
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{}" stroke="black"/>"#,
        MARGIN_T + plot_h
    );
    // y ticks every 0.2
    for i in 0..=5 {
        let rate = i as f64 / 5.0;
        let yy = y(rate);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{yy}" x2="{MARGIN_L}" y2="{yy}" stroke="black"/>"#,
            MARGIN_L - 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{:.1}</text>"#,
            MARGIN_L - 8.0,
            yy + 4.0,
            rate
        );
    }
    // x ticks at each observed n
    let mut ns: Vec<f64> = result.cells.iter().map(|c| c.n as f64).collect();
    ns.sort_by(f64::total_cmp);
    ns.dedup();
    for n in &ns {
        let xx = x(*n);
        let _ = writeln!(
            svg,
            r#"<line x1="{xx}" y1="{}" x2="{xx}" y2="{}" stroke="black"/>"#,
            MARGIN_T + plot_h,
            MARGIN_T + plot_h + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{xx}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            MARGIN_T + plot_h + 18.0,
            n
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">n</text>"#,
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})" text-anchor="middle">rejection rate</text>"#,
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    );
    // gamma reference
    let gy = y(gamma);
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN_L}" y1="{gy}" x2="{}" y2="{gy}" stroke="gray" stroke-dasharray="5,4"/>"#,
        MARGIN_L + plot_w
    );

    for (idx, (name, points)) in series.iter().enumerate() {
        let color = COLORS[idx % COLORS.len()];
        let mut sorted = points.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path: Vec<String> = sorted
            .iter()
            .map(|(n, r)| format!("{:.2},{:.2}", x(*n), y(*r)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        for (n, r) in &sorted {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                x(*n),
                y(*r)
            );
        }
        let ly = MARGIN_T + 16.0 * idx as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            MARGIN_L + plot_w + 10.0,
            MARGIN_L + plot_w + 34.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            MARGIN_L + plot_w + 40.0,
            ly + 4.0,
            name
        );
    }
    svg.push_str("</svg>\n");
    svg
}
