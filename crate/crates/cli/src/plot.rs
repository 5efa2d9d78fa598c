//! Self-contained SVG learning curves: return and mean |TD error| per
//! episode, one panel each. Output depends only on the input records.

use std::fmt::Write;

use csqbm_core::metrics::EpisodeMetrics;

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 240.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const GAP: f64 = 60.0;

struct Panel<'a> {
    title: &'a str,
    color: &'a str,
    ys: Vec<f64>,
}

pub fn learning_curve(records: &[EpisodeMetrics]) -> String {
    let xs: Vec<f64> = records.iter().map(|r| r.episode as f64).collect();
    let panels = [
        Panel { title: "return", color: "#1f77b4", ys: records.iter().map(|r| r.ret).collect() },
        Panel { title: "mean |TD error|", color: "#d62728", ys: records.iter().map(|r| r.mean_abs_td).collect() },
    ];
    let height = MARGIN_TOP + panels.len() as f64 * (PANEL_HEIGHT + GAP);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        let top = MARGIN_TOP + i as f64 * (PANEL_HEIGHT + GAP);
        draw_panel(&mut svg, &xs, p, top);
    }
    svg.push_str("</svg>\n");
    svg
}

fn padded_range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.5;
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn draw_panel(svg: &mut String, xs: &[f64], p: &Panel, top: f64) {
    let (x0, x1) = padded_range(xs);
    let (y0, y1) = padded_range(&p.ys);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| top + PANEL_HEIGHT - (y - y0) / (y1 - y0) * PANEL_HEIGHT;

    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN_LEFT}" y="{top}" width="{plot_w}" height="{PANEL_HEIGHT}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(svg, r#"<text x="{MARGIN_LEFT}" y="{:.1}" font-size="13">{}</text>"#, top - 8.0, p.title);
    for k in 0..=4 {
        let y = y0 + (y1 - y0) * k as f64 / 4.0;
        let x = x0 + (x1 - x0) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="end" fill="#444">{}</text>"##,
            MARGIN_LEFT - 6.0,
            sy(y) + 4.0,
            tick(y)
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="middle" fill="#444">{}</text>"##,
            sx(x),
            top + PANEL_HEIGHT + 16.0,
            tick(x)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">episode</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        top + PANEL_HEIGHT + 32.0
    );
    if xs.len() == 1 {
        let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#, sx(xs[0]), sy(p.ys[0]), p.color);
        return;
    }
    let mut points = String::new();
    for (x, y) in xs.iter().zip(&p.ys) {
        let _ = write!(points, "{:.2},{:.2} ", sx(*x), sy(*y));
    }
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
        p.color,
        points.trim_end()
    );
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}
