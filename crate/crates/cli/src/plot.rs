//! Self-contained SVG semilog plot of per-pass norms.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

/// One polyline of `values[k]` against `k` on a log10 y-axis. Non-positive
/// values are drawn at the bottom decade.
pub fn semilog_svg(values: &[f64], title: &str, y_label: &str) -> String {
    let positive: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0 && v.is_finite()).collect();
    let (lo, hi) = positive
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (mut p_lo, mut p_hi) = if positive.is_empty() {
        (-1, 0)
    } else {
        (lo.log10().floor() as i32, hi.log10().ceil() as i32)
    };
    if values.iter().any(|v| !(*v > 0.0)) {
        p_lo -= 1;
    }
    if p_hi <= p_lo {
        p_hi = p_lo + 1;
    }
    let k_max = values.len().saturating_sub(1).max(1) as f64;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x_of = |k: f64| LEFT + plot_w * k / k_max;
    let y_of = |v: f64| {
        let p = if v > 0.0 && v.is_finite() { v.log10() } else { p_lo as f64 };
        TOP + plot_h * (p_hi as f64 - p.clamp(p_lo as f64, p_hi as f64)) / (p_hi - p_lo) as f64
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="18" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT} {TOP} V{:.1} H{:.1}" fill="none" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w
    );
    for p in p_lo..=p_hi {
        let y = y_of(10f64.powi(p));
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end" font-family="sans-serif" font-size="11">1e{p}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let step = ((k_max / 10.0).ceil() as usize).max(1);
    for k in (0..values.len().max(2)).step_by(step) {
        let x = x_of(k as f64);
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11">{k}</text>"#,
            TOP + plot_h + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="12">pass k</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {:.1})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );
    let points: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(k, &v)| format!("{:.2},{:.2}", x_of(k as f64), y_of(v)))
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" points="{}"/>"##,
        points.join(" ")
    );
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_polyline_with_labels() {
        let svg = semilog_svg(&[1.0, 0.1, 0.01, 0.0], "t", "norm <y>");
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("pass k") && svg.contains("norm &lt;y&gt;"));
        assert!(svg.contains(">1e0<") && svg.contains(">1e-3<"));
    }

    #[test]
    fn decades_map_linearly() {
        let svg = semilog_svg(&[1.0, 0.1, 0.01], "", "");
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        let ys: Vec<f64> = pts.split(' ').map(|p| p.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert!(((ys[1] - ys[0]) - (ys[2] - ys[1])).abs() < 0.02);
        assert!(ys[0] < ys[1]);
    }
}
