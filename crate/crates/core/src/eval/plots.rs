//! Hand-written SVG and CSV output for training curves and top-down
//! trajectories.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::eval::runner::TrajectoryRow;
use crate::sim::{Shape, Vec2, WorldMap};

/// A named `(x, y)` polyline.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Reads `x_col` and `y_col` of a training-statistics CSV. A log with no
/// rows yet (and so no header) reads as an empty series.
pub fn read_series(path: &Path, name: &str, x_col: &str, y_col: &str) -> Result<Series> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.is_empty() {
        return Ok(Series {
            name: name.to_string(),
            points: Vec::new(),
        });
    }
    let find = |c: &str| {
        headers
            .iter()
            .position(|h| h == c)
            .ok_or_else(|| crate::error::Error::invalid(c, format!("no such column in {}", path.display())))
    };
    let (xi, yi) = (find(x_col)?, find(y_col)?);
    let mut points = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let x: f64 = rec[xi].parse().map_err(|_| crate::error::Error::invalid(x_col, "not a number"))?;
        let y: f64 = rec[yi].parse().map_err(|_| crate::error::Error::invalid(y_col, "not a number"))?;
        points.push((x, y));
    }
    Ok(Series {
        name: name.to_string(),
        points,
    })
}

/// Long-format CSV `series,x,y`; header only when there are no points.
pub fn curves_csv(series: &[Series]) -> String {
    let mut s = String::from("series,x,y\n");
    for ser in series {
        for (x, y) in &ser.points {
            let _ = writeln!(s, "{},{x},{y}", ser.name);
        }
    }
    s
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    (0..=4).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect()
}

/// Line chart of every series on shared axes.
pub fn curves_svg(series: &[Series], title: &str, x_label: &str, y_label: &str) -> String {
    let (w, h, m) = (640.0, 400.0, 56.0);
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{m} {m} V{} H{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m
    );
    for t in ticks(x0, x1) {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, px(t), h - m + 16.0, fmt_tick(t));
    }
    for t in ticks(y0, y1) {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, m - 6.0, py(t) + 4.0, fmt_tick(t));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 12.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !ser.points.is_empty() {
            let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.join(" "));
        }
        let ly = m + 14.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}" fill="{color}">{}</text>"#, w - m - 120.0, escape(&ser.name));
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{:.0}", v)
    } else {
        format!("{:.2}", v)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Blue-to-red ramp for a probability.
fn risk_color(q: f64) -> String {
    let q = q.clamp(0.0, 1.0);
    let r = (255.0 * q).round() as u8;
    let b = (255.0 * (1.0 - q)).round() as u8;
    format!("#{r:02x}40{b:02x}")
}

/// Top-down map with obstacles, the path, one marker per logged step
/// colored by `Q_c`, a black start star and a red goal star.
pub fn trajectory_svg(world: &WorldMap, rows: &[TrajectoryRow], goal: Vec2) -> String {
    let scale = 60.0;
    let b = world.bounds;
    let (w, h) = (b.width() * scale, b.height() * scale);
    let tx = |p: Vec2| ((p.x - b.min.x) * scale, (b.max.y - p.y) * scale);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#
    );
    let _ = writeln!(s, r##"<rect width="{w:.0}" height="{h:.0}" fill="#f7f7f7" stroke="black"/>"##);
    for o in &world.obstacles {
        match o.shape {
            Shape::Circle { center, radius } => {
                let (cx, cy) = tx(center);
                let _ = writeln!(s, r##"<circle cx="{cx:.1}" cy="{cy:.1}" r="{:.1}" fill="#777"/>"##, radius * scale);
            }
            Shape::Rect(bb) => {
                let (x, y) = tx(Vec2::new(bb.min.x, bb.max.y));
                let _ = writeln!(
                    s,
                    r##"<rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{:.1}" fill="#777"/>"##,
                    bb.width() * scale,
                    bb.height() * scale
                );
            }
        }
    }
    if rows.len() > 1 {
        let pts: Vec<String> = rows
            .iter()
            .map(|r| {
                let (x, y) = tx(Vec2::new(r.x, r.y));
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#333" stroke-width="1"/>"##, pts.join(" "));
    }
    let _ = writeln!(s, r#"<g class="waypoints">"#);
    for r in rows {
        let (x, y) = tx(Vec2::new(r.x, r.y));
        let fill = r.q_c.map_or("#999999".to_string(), risk_color);
        let _ = writeln!(s, r#"<circle class="wp" cx="{x:.1}" cy="{y:.1}" r="2.5" fill="{fill}"/>"#);
    }
    let _ = writeln!(s, "</g>");
    if let Some(first) = rows.first() {
        let (x, y) = tx(Vec2::new(first.x, first.y));
        let _ = writeln!(s, r#"<path d="{}" fill="black"/>"#, star(x, y, 9.0));
    }
    let (gx, gy) = tx(goal);
    let _ = writeln!(s, r#"<path d="{}" fill="red"/>"#, star(gx, gy, 9.0));
    s.push_str("</svg>\n");
    s
}

fn star(cx: f64, cy: f64, r: f64) -> String {
    let mut d = String::new();
    for i in 0..10 {
        let rad = if i % 2 == 0 { r } else { r * 0.45 };
        let a = -std::f64::consts::FRAC_PI_2 + i as f64 * std::f64::consts::PI / 5.0;
        let _ = write!(d, "{}{:.1} {:.1} ", if i == 0 { "M" } else { "L" }, cx + rad * a.cos(), cy + rad * a.sin());
    }
    d.push('Z');
    d
}

/// Writes `<stem>.csv` and `<stem>.svg` for the curves.
pub fn emit_curves(dir: &Path, stem: &str, series: &[Series], title: &str, x_label: &str, y_label: &str) -> Result<()> {
    std::fs::write(dir.join(format!("{stem}.csv")), curves_csv(series))?;
    std::fs::write(dir.join(format!("{stem}.svg")), curves_svg(series, title, x_label, y_label))?;
    Ok(())
}
