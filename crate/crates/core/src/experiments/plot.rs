use std::fmt::Write as _;
use std::path::Path;

use super::table::ResultTable;
use crate::error::{domain, Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 56.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Mean CER per condition as an SVG line chart with one-standard-deviation
/// whiskers. Conditions are categorical, ascending, with clean speech and
/// sine-wave speech rightmost. The output depends only on the table.
pub fn render_svg(table: &ResultTable, title: &str) -> Result<String> {
    if table.rows.len() < 2 {
        return Err(domain!("a plot needs at least two conditions, got {}", table.rows.len()));
    }
    if table.rows.iter().any(|r| r.experiment != table.rows[0].experiment) {
        return Err(domain!("a plot shows a single experiment"));
    }
    let mut rows = table.rows.clone();
    rows.sort_by(|a, b| a.condition.sort_key().total_cmp(&b.condition.sort_key()));
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let y_max = rows
        .iter()
        .map(|r| r.cer_mean + r.cer_std)
        .fold(1.0f64, f64::max)
        .ceil();
    let x_at = |i: usize| MARGIN_LEFT + plot_w * (i as f64 + 0.5) / rows.len() as f64;
    let y_at = |v: f64| MARGIN_TOP + plot_h * (1.0 - v.clamp(0.0, y_max) / y_max);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (y0, y1) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
    let _ = writeln!(s, r#"<line x1="{x0:.2}" y1="{y1:.2}" x2="{x1:.2}" y2="{y1:.2}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}" stroke="black"/>"#);

    let ticks = 4;
    for k in 0..=ticks {
        let v = y_max * k as f64 / ticks as f64;
        let y = y_at(v);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black"/>"#, x0 - 4.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"#,
            x0 - 8.0,
            y + 4.0
        );
    }
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x_at(i),
            y1 + 18.0,
            escape(&r.condition.to_string())
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 14.0,
        escape(&rows[0].experiment)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">CER</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );

    for (i, r) in rows.iter().enumerate() {
        let x = x_at(i);
        let (lo, hi) = (y_at(r.cer_mean - r.cer_std), y_at(r.cer_mean + r.cer_std));
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{lo:.2}" x2="{x:.2}" y2="{hi:.2}" stroke="gray"/>"#);
        for y in [lo, hi] {
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="gray"/>"#,
                x - 5.0,
                x + 5.0
            );
        }
    }
    let points: Vec<String> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| format!("{:.2},{:.2}", x_at(i), y_at(r.cer_mean)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        points.join(" ")
    );
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#,
            x_at(i),
            y_at(r.cer_mean)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn render_plot(table: &ResultTable, title: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_svg(table, title)?).map_err(|e| Error::io(path, e))
}
