//! Accuracy-versus-training-fraction chart as standalone SVG.

use std::fmt::Write;

use vistim_core::evaluation::EvaluationReport;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One polyline per report through its mean accuracies, with a vertical
/// bar of one standard deviation either side of every point.
pub fn accuracy_svg(reports: &[EvaluationReport]) -> String {
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |f: f64| LEFT + f * pw;
    let sy = |a: f64| TOP + (1.0 - a.clamp(0.0, 1.0)) * ph;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black"><line x1="{LEFT}" y1="{}" x2="{}" y2="{}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}"/></g>"#,
        TOP + ph,
        LEFT + pw,
        TOP + ph,
        TOP + ph
    );
    for i in 0..=10 {
        let v = i as f64 / 10.0;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text><text x="{x:.2}" y="{:.2}" text-anchor="middle">{v:.1}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            sy(v) + 4.0,
            TOP + ph + 16.0,
            x = sx(v),
            y = sy(v),
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">training fraction</text><text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">mean accuracy</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0,
        TOP + ph / 2.0
    );
    for (i, r) in reports.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let id = escape(&r.descriptor);
        let mut points: Vec<_> = r.summary.iter().collect();
        points.sort_by(|a, b| a.fraction.total_cmp(&b.fraction));
        let coords: Vec<String> = points
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.fraction), sy(p.mean)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="curve" data-descriptor="{id}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        );
        for p in &points {
            let x = sx(p.fraction);
            let _ = writeln!(
                s,
                r#"<line class="errorbar" data-descriptor="{id}" x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}"/><circle cx="{x:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sy(p.mean - p.std),
                sy(p.mean + p.std),
                sy(p.mean)
            );
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 16.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{id}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}
