//! Monocular highlighting for ordinary charts.
//!
//! A highlighted line series is drawn for one eye only. Everything else,
//! including the highlighted series in the eye that sees it, is identical to
//! the plain chart, so the highlight changes no position, color or size.

use std::collections::BTreeSet;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ViewingGeometry;
use crate::render::{PixelRect, Raster, StereoPair};
use crate::scene::{ColorRgb, Eye};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChartStyle {
    /// Square pen width; 1 draws plain Bresenham lines.
    pub stroke_px: u32,
    pub margin_px: u32,
    pub tick_px: u32,
    pub ticks: u32,
    pub background: ColorRgb,
    pub axis: ColorRgb,
    /// Series colors, cycled.
    pub palette: Vec<ColorRgb>,
}

impl Default for ChartStyle {
    fn default() -> Self {
        Self {
            stroke_px: 1,
            margin_px: 40,
            tick_px: 6,
            ticks: 5,
            background: ColorRgb::new(255, 255, 255),
            axis: ColorRgb::new(0, 0, 0),
            palette: vec![
                ColorRgb::new(31, 119, 180),
                ColorRgb::new(255, 127, 14),
                ColorRgb::new(44, 160, 44),
                ColorRgb::new(214, 39, 40),
                ColorRgb::new(148, 103, 189),
                ColorRgb::new(140, 86, 75),
                ColorRgb::new(227, 119, 194),
                ColorRgb::new(127, 127, 127),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub series: Vec<Series>,
    /// Data range shown; defaults to the extent of all series.
    #[serde(default)]
    pub x_range: Option<(f64, f64)>,
    #[serde(default)]
    pub y_range: Option<(f64, f64)>,
    #[serde(default)]
    pub style: ChartStyle,
    #[serde(default)]
    pub highlight: BTreeSet<String>,
    /// The eye the highlighted series is removed from.
    pub hidden_eye: Eye,
}

impl ChartSpec {
    pub fn new(series: Vec<Series>) -> Self {
        Self {
            series,
            x_range: None,
            y_range: None,
            style: ChartStyle::default(),
            highlight: BTreeSet::new(),
            hidden_eye: Eye::Right,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.series.is_empty() {
            return Err(Error::InvalidChart("no series".into()));
        }
        for s in &self.series {
            if s.points.is_empty() {
                return Err(Error::InvalidChart(format!("series `{}` is empty", s.name)));
            }
            if s.points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
                return Err(Error::InvalidChart(format!(
                    "series `{}` has a non-finite coordinate",
                    s.name
                )));
            }
        }
        for h in &self.highlight {
            if !self.series.iter().any(|s| &s.name == h) {
                return Err(Error::InvalidChart(format!("no series named `{h}`")));
            }
        }
        for r in [self.x_range, self.y_range].into_iter().flatten() {
            if !(r.0.is_finite() && r.1.is_finite() && r.0 < r.1) {
                return Err(Error::InvalidChart(format!("bad axis range {r:?}")));
            }
        }
        if self.style.stroke_px == 0 || self.style.palette.is_empty() {
            return Err(Error::InvalidChart("stroke width and palette must be non-empty".into()));
        }
        Ok(())
    }

    fn extent(&self, pick: impl Fn(&(f64, f64)) -> f64) -> (f64, f64) {
        let (lo, hi) = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(&pick))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if lo == hi {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    }
}

/// Reads a chart from CSV: a header row, x in the first column and one series
/// per remaining column. Empty cells are skipped.
pub fn series_from_csv<R: Read>(reader: R) -> Result<Vec<Series>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::InvalidChart("CSV needs an x column and at least one series".into()));
    }
    let mut series: Vec<Series> = headers
        .iter()
        .skip(1)
        .map(|h| Series {
            name: h.to_string(),
            points: Vec::new(),
        })
        .collect();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let num = |col: usize| -> Result<Option<f64>> {
            let cell = rec.get(col).unwrap_or("");
            if cell.is_empty() {
                return Ok(None);
            }
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| {
                    Error::InvalidChart(format!(
                        "line {line}, column `{}`: `{cell}` is not a number",
                        headers.get(col).unwrap_or("?")
                    ))
                })
        };
        let Some(x) = num(0)? else { continue };
        for (i, s) in series.iter_mut().enumerate() {
            if let Some(y) = num(i + 1)? {
                s.points.push((x, y));
            }
        }
    }
    Ok(series)
}

/// Pixel placement of the plot area and data ranges.
#[derive(Debug, Clone, Copy)]
struct Frame {
    plot: PixelRect,
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(spec: &ChartSpec, width: u32, height: u32) -> Result<Frame> {
        let m = spec.style.margin_px;
        if width <= 2 * m + 2 || height <= 2 * m + 2 {
            return Err(Error::InvalidChart(format!(
                "{width}x{height} canvas is too small for {m}px margins"
            )));
        }
        Ok(Frame {
            plot: PixelRect {
                x0: m,
                y0: m,
                x1: width - m,
                y1: height - m,
            },
            x: spec.x_range.unwrap_or_else(|| spec.extent(|p| p.0)),
            y: spec.y_range.unwrap_or_else(|| spec.extent(|p| p.1)),
        })
    }

    fn to_px(&self, (x, y): (f64, f64)) -> (i64, i64) {
        let w = (self.plot.x1 - self.plot.x0 - 1) as f64;
        let h = (self.plot.y1 - self.plot.y0 - 1) as f64;
        let px = self.plot.x0 as f64 + (x - self.x.0) / (self.x.1 - self.x.0) * w;
        let py = (self.plot.y1 - 1) as f64 - (y - self.y.0) / (self.y.1 - self.y.0) * h;
        (px.round() as i64, py.round() as i64)
    }
}

/// Visits every pixel of a Bresenham line from `a` to `b`.
pub fn bresenham(a: (i64, i64), b: (i64, i64), mut visit: impl FnMut(i64, i64)) {
    let (mut x, mut y) = a;
    let dx = (b.0 - x).abs();
    let dy = -(b.1 - y).abs();
    let sx = if x < b.0 { 1 } else { -1 };
    let sy = if y < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        visit(x, y);
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Pixels covered by a series stroke, clipped to the plot area.
fn stroke(frame: &Frame, series: &Series, pen: u32, mut visit: impl FnMut(u32, u32)) {
    let lo = -((pen as i64 - 1) / 2);
    let hi = pen as i64 / 2;
    let clip = frame.plot;
    let mut stamp = |x: i64, y: i64| {
        for oy in lo..=hi {
            for ox in lo..=hi {
                let (px, py) = (x + ox, y + oy);
                if px >= clip.x0 as i64 && py >= clip.y0 as i64 && px < clip.x1 as i64 && py < clip.y1 as i64
                {
                    visit(px as u32, py as u32);
                }
            }
        }
    };
    let pts: Vec<(i64, i64)> = series.points.iter().map(|&p| frame.to_px(p)).collect();
    if pts.len() == 1 {
        stamp(pts[0].0, pts[0].1);
    }
    for w in pts.windows(2) {
        bresenham(w[0], w[1], &mut stamp);
    }
}

fn draw_axes(r: &mut Raster, frame: &Frame, style: &ChartStyle) {
    let p = frame.plot;
    let axis = style.axis;
    // x axis along the bottom, y axis along the left edge, just outside the plot.
    let (ax, ay) = (p.x0 as i64 - 1, p.y1 as i64);
    bresenham((ax, ay), (p.x1 as i64, ay), |x, y| r.put(x, y, axis));
    bresenham((ax, ay), (ax, p.y0 as i64), |x, y| r.put(x, y, axis));
    let n = style.ticks.max(1);
    for i in 0..=n {
        let t = i as f64 / n as f64;
        let tx = ax + ((p.x1 as i64 - ax) as f64 * t).round() as i64;
        bresenham((tx, ay), (tx, ay + style.tick_px as i64), |x, y| r.put(x, y, axis));
        let ty = ay - ((ay - p.y0 as i64) as f64 * t).round() as i64;
        bresenham((ax - style.tick_px as i64, ty), (ax, ty), |x, y| r.put(x, y, axis));
    }
}

fn render_chart(spec: &ChartSpec, frame: &Frame, width: u32, height: u32, skip_highlighted: bool) -> Raster {
    let mut r = Raster::filled(width, height, spec.style.background);
    draw_axes(&mut r, frame, &spec.style);
    for (i, s) in spec.series.iter().enumerate() {
        if skip_highlighted && spec.highlight.contains(&s.name) {
            continue;
        }
        let color = spec.style.palette[i % spec.style.palette.len()];
        stroke(frame, s, spec.style.stroke_px, |x, y| r.set(x, y, color.to_array()));
    }
    r
}

/// Renders the chart once per eye at the display resolution; highlighted
/// series are left out of the hidden eye's image.
pub fn render_chart_pair(spec: &ChartSpec, geom: &ViewingGeometry) -> Result<StereoPair> {
    spec.validate()?;
    geom.validate()?;
    let (w, h) = (geom.res_w_px, geom.res_h_px);
    let frame = Frame::new(spec, w, h)?;
    let full = render_chart(spec, &frame, w, h, false);
    let partial = if spec.highlight.is_empty() {
        full.clone()
    } else {
        render_chart(spec, &frame, w, h, true)
    };
    let (left, right) = match spec.hidden_eye {
        Eye::Left => (partial, full),
        Eye::Right => (full, partial),
    };
    StereoPair::new(left, right)
}

/// Row-major mask of the pixels the highlighted series' strokes cover.
pub fn highlight_footprint(spec: &ChartSpec, geom: &ViewingGeometry) -> Result<Vec<bool>> {
    spec.validate()?;
    let (w, h) = (geom.res_w_px, geom.res_h_px);
    let frame = Frame::new(spec, w, h)?;
    let mut mask = vec![false; w as usize * h as usize];
    for s in spec.series.iter().filter(|s| spec.highlight.contains(&s.name)) {
        stroke(&frame, s, spec.style.stroke_px, |x, y| {
            mask[y as usize * w as usize + x as usize] = true
        });
    }
    Ok(mask)
}

/// Two images of equal size for side-by-side comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparePair {
    image_a: Raster,
    image_b: Raster,
}

impl ComparePair {
    pub fn new(image_a: Raster, image_b: Raster) -> Result<Self> {
        image_a.same_size(&image_b)?;
        Ok(Self { image_a, image_b })
    }
}

/// Shows `image_a` to the left eye and `image_b` to the right, so whatever
/// differs between them is seen by one eye only.
pub fn compare_composite(pair: ComparePair) -> StereoPair {
    StereoPair {
        left: pair.image_a,
        right: pair.image_b,
    }
}
