//! Minimal SVG charts: stacked bars and polylines.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 70.0;
const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, y_label: &str, y_max: f64) {
    let (x0, y0, y1) = (LEFT, H - BOTTOM, TOP);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#, W - RIGHT);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let y = y0 - (y0 - y1) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            y + 4.0,
            tick(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

fn legend(out: &mut String, names: &[String]) {
    for (i, name) in names.iter().enumerate() {
        let x = LEFT + 10.0 + 150.0 * i as f64;
        let y = H - 22.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{y}">{}</text>"#,
            y - 9.0,
            PALETTE[i % PALETTE.len()],
            x + 14.0,
            escape(name)
        );
    }
}

/// One stacked bar per category; `stacks[s][c]` is the height of layer `s`
/// in category `c`.
pub fn stacked_bars(title: &str, y_label: &str, categories: &[String], layers: &[String], stacks: &[Vec<f64>]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let totals: Vec<f64> = (0..categories.len())
        .map(|c| stacks.iter().map(|s| s[c].max(0.0)).sum())
        .collect();
    let y_max = totals.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE) * 1.05;
    axes(&mut out, y_label, y_max);
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - BOTTOM - TOP;
    let slot = plot_w / categories.len().max(1) as f64;
    for (c, cat) in categories.iter().enumerate() {
        let x = LEFT + slot * (c as f64 + 0.15);
        let mut y = H - BOTTOM;
        for (s, layer) in stacks.iter().enumerate() {
            let h = layer[c].max(0.0) / y_max * plot_h;
            y -= h;
            let _ = writeln!(
                out,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{h:.1}" fill="{}"/>"#,
                slot * 0.7,
                PALETTE[s % PALETTE.len()]
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            x + slot * 0.35,
            H - BOTTOM + 16.0,
            escape(cat)
        );
    }
    legend(&mut out, layers);
    out.push_str("</svg>\n");
    out
}

/// Polylines over shared x positions, each series scaled to its own maximum
/// when `normalize` is set.
pub fn lines(title: &str, x_label: &str, y_label: &str, xs: &[f64], series: &[(String, Vec<f64>)], normalize: bool) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let finite_max = |v: &[f64]| v.iter().cloned().filter(|x| x.is_finite()).fold(0.0, f64::max);
    let y_max = if normalize {
        1.05
    } else {
        series.iter().map(|(_, v)| finite_max(v)).fold(0.0, f64::max).max(f64::MIN_POSITIVE) * 1.05
    };
    axes(&mut out, y_label, y_max);
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let px = |x: f64| LEFT + 10.0 + (x - lo) / span * (W - LEFT - RIGHT - 20.0);
    let plot_h = H - BOTTOM - TOP;
    for &x in xs {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            px(x),
            H - BOTTOM + 16.0,
            tick(x)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - BOTTOM + 34.0,
        escape(x_label)
    );
    for (s, (_, ys)) in series.iter().enumerate() {
        let scale = if normalize { finite_max(ys).max(f64::MIN_POSITIVE) } else { 1.0 };
        let pts: Vec<String> = xs
            .iter()
            .zip(ys)
            .filter(|(_, y)| y.is_finite())
            .map(|(&x, &y)| format!("{:.1},{:.1}", px(x), H - BOTTOM - y / scale / y_max * plot_h))
            .collect();
        let color = PALETTE[s % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        for p in &pts {
            let (x, y) = p.split_once(',').unwrap();
            let _ = writeln!(out, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#);
        }
    }
    let names: Vec<String> = series.iter().map(|(n, _)| n.clone()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bars_are_well_formed() {
        let svg = stacked_bars(
            "t",
            "ms",
            &["a".into(), "b<".into()],
            &["x".into(), "y".into()],
            &[vec![1.0, 2.0], vec![3.0, 0.5]],
        );
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect x=").count(), 4 + 2);
        assert!(svg.contains("b&lt;"));
    }

    #[test]
    fn lines_skip_non_finite() {
        let svg = lines("t", "cell", "epe", &[1.0, 0.5, 0.1], &[("epe".into(), vec![0.3, f64::NAN, 0.1])], false);
        assert_eq!(svg.matches("<circle").count(), 2);
    }
}
