//! Minimal SVG plots of a report section.

use std::fmt::Write as _;

use super::analysis::{SetSizeTable, SpatialMatrix};

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Bar chart of per-set-size means with ±1 SD whiskers.
pub fn bar_chart(table: &SetSizeTable, title: &str, y_max: f64, unit: &str) -> String {
    let (w, h) = (480.0, 320.0);
    let (left, right, top, bottom) = (56.0, 16.0, 36.0, 40.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let y = |v: f64| top + plot_h * (1.0 - (v / y_max).clamp(0.0, 1.0));
    let n = table.rows.len().max(1) as f64;
    let slot = plot_w / n;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    for i in 0..=4 {
        let v = y_max * i as f64 / 4.0;
        let gy = y(v);
        let label = if y_max > 10.0 { format!("{v:.0}") } else { format!("{v:.2}") };
        let _ = writeln!(
            s,
            r##"<line x1="{left}" x2="{x2}" y1="{gy:.1}" y2="{gy:.1}" stroke="#ddd"/><text x="{lx}" y="{ly:.1}" text-anchor="end">{label}</text>"##,
            x2 = w - right,
            lx = left - 6.0,
            ly = gy + 4.0,
        );
    }
    for (i, row) in table.rows.iter().enumerate() {
        let cx = left + slot * (i as f64 + 0.5);
        let bw = slot * 0.6;
        if row.mean.is_finite() {
            let _ = writeln!(
                s,
                r##"<rect x="{:.1}" y="{:.1}" width="{bw:.1}" height="{:.1}" fill="#00549f"/>"##,
                cx - bw / 2.0,
                y(row.mean),
                top + plot_h - y(row.mean)
            );
            if let Some(sd) = row.sd {
                let _ = writeln!(
                    s,
                    r#"<line x1="{cx:.1}" x2="{cx:.1}" y1="{:.1}" y2="{:.1}" stroke="black"/>"#,
                    y(row.mean - sd),
                    y(row.mean + sd)
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            top + plot_h + 16.0,
            row.set_size
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">set size{}</text>"#,
        left + plot_w / 2.0,
        h - 6.0,
        if unit.is_empty() { String::new() } else { format!(" ({})", escape(unit)) }
    );
    s.push_str("</svg>\n");
    s
}

/// Heat map of the spatial hit-rate matrix; red is low, green high, grey
/// marks cells that never held a target.
pub fn matrix_chart(m: &SpatialMatrix, title: &str) -> String {
    let cell = 64.0;
    let top = 36.0;
    let w = cell * m.cols as f64;
    let h = top + cell * m.rows as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="13">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    for (r, row) in m.cells.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let x = c as f64 * cell;
            let y = top + r as f64 * cell;
            let (fill, label) = match v.rate {
                Some(rate) => {
                    let red = (255.0 * (1.0 - rate)).round() as u8;
                    let green = (200.0 * rate).round() as u8;
                    (format!("rgb({red},{green},60)"), format!("{rate:.2}"))
                }
                None => ("rgb(200,200,200)".to_string(), "-".to_string()),
            };
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="white"/><text x="{}" y="{}" text-anchor="middle" fill="white">{label}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 5.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
