//! Per-eye rasterization and stereo composites.
//!
//! Discs are drawn without antialiasing by default: a pixel is filled when its
//! centre lies inside the circle. This keeps the two eye images bit-identical
//! everywhere except under a monocular disc.

use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ViewingGeometry;
use crate::scene::{ColorRgb, Disc, Eye, Stimulus};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Raster {
    pub fn filled(width: u32, height: u32, color: ColorRgb) -> Self {
        let pixels = color.to_array().repeat(width as usize * height as usize);
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn from_rgb(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width as usize * height as usize * 3 {
            return Err(Error::Png(format!(
                "buffer of {} bytes does not hold {width}x{height} RGB pixels",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.pixels[o..o + 3].copy_from_slice(&rgb);
    }

    pub fn put(&mut self, x: i64, y: i64, color: ColorRgb) {
        if x >= 0 && y >= 0 && (x as u32) < self.width && (y as u32) < self.height {
            self.set(x as u32, y as u32, color.to_array());
        }
    }

    pub fn fill_rect(&mut self, rect: PixelRect, color: ColorRgb) {
        let r = rect.clip(self.width, self.height);
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                self.set(x, y, color.to_array());
            }
        }
    }

    pub fn count_color(&self, color: ColorRgb) -> usize {
        self.pixels
            .chunks_exact(3)
            .filter(|p| *p == color.to_array())
            .count()
    }

    pub fn same_size(&self, other: &Raster) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_png_to(&mut out)?;
        Ok(out)
    }

    fn write_png_to<W: Write>(&self, w: W) -> Result<()> {
        let mut enc = png::Encoder::new(w, self.width, self.height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
        writer
            .write_image_data(&self.pixels)
            .map_err(|e| Error::Png(e.to_string()))?;
        writer.finish().map_err(|e| Error::Png(e.to_string()))
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_png_to(BufWriter::new(file))
    }

    pub fn read_png(path: &Path) -> Result<Raster> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| Error::Png(e.to_string()))?;
        buf.truncate(info.buffer_size());
        let pixels = match info.color_type {
            png::ColorType::Rgb => buf,
            png::ColorType::Rgba => buf
                .chunks_exact(4)
                .flat_map(|p| [p[0], p[1], p[2]])
                .collect(),
            png::ColorType::Grayscale => buf.iter().flat_map(|&v| [v, v, v]).collect(),
            png::ColorType::GrayscaleAlpha => {
                buf.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect()
            }
            png::ColorType::Indexed => {
                return Err(Error::Png("indexed PNG was not expanded".into()))
            }
        };
        Raster::from_rgb(info.width, info.height, pixels)
    }
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn clip(&self, width: u32, height: u32) -> PixelRect {
        PixelRect {
            x0: self.x0.min(width),
            y0: self.y0.min(height),
            x1: self.x1.min(width),
            y1: self.y1.min(height),
        }
    }

    pub fn union(&self, other: &PixelRect) -> PixelRect {
        PixelRect {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StereoPair {
    pub left: Raster,
    pub right: Raster,
}

impl StereoPair {
    pub fn new(left: Raster, right: Raster) -> Result<Self> {
        left.same_size(&right)?;
        Ok(Self { left, right })
    }

    pub fn eye(&self, eye: Eye) -> &Raster {
        match eye {
            Eye::Left => &self.left,
            Eye::Right => &self.right,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderOptions {
    /// 4×4 supersampled edges. Diffs then stay inside the disc bounding box
    /// but are no longer exactly the filled footprint.
    pub antialias: bool,
}

/// Disc centre and radius in pixels.
pub fn disc_px(disc: &Disc, geom: &ViewingGeometry) -> (f64, f64, f64) {
    let (cx, cy) = geom.deg_to_px(disc.center);
    (cx, cy, geom.angle_to_px(2.0 * disc.radius_deg) / 2.0)
}

/// Every pixel a disc can touch.
pub fn disc_bbox(disc: &Disc, geom: &ViewingGeometry) -> PixelRect {
    let (cx, cy, r) = disc_px(disc, geom);
    PixelRect {
        x0: (cx - r).floor().max(0.0) as u32,
        y0: (cy - r).floor().max(0.0) as u32,
        x1: (cx + r).ceil().max(0.0) as u32 + 1,
        y1: (cy + r).ceil().max(0.0) as u32 + 1,
    }
    .clip(geom.res_w_px, geom.res_h_px)
}

fn draw_disc(raster: &mut Raster, disc: &Disc, geom: &ViewingGeometry, opts: RenderOptions) {
    let (cx, cy, r) = disc_px(disc, geom);
    let bbox = disc_bbox(disc, geom);
    let r2 = r * r;
    for y in bbox.y0..bbox.y1 {
        for x in bbox.x0..bbox.x1 {
            if !opts.antialias {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                if dx * dx + dy * dy <= r2 {
                    raster.set(x, y, disc.color.to_array());
                }
            } else {
                let mut hits = 0u32;
                for sy in 0..4 {
                    for sx in 0..4 {
                        let dx = x as f64 + (sx as f64 + 0.5) / 4.0 - cx;
                        let dy = y as f64 + (sy as f64 + 0.5) / 4.0 - cy;
                        hits += (dx * dx + dy * dy <= r2) as u32;
                    }
                }
                if hits == 0 {
                    continue;
                }
                let bg = raster.get(x, y);
                let fg = disc.color.to_array();
                let mix = |b: u8, f: u8| {
                    ((b as u32 * (16 - hits) + f as u32 * hits + 8) / 16) as u8
                };
                raster.set(x, y, [mix(bg[0], fg[0]), mix(bg[1], fg[1]), mix(bg[2], fg[2])]);
            }
        }
    }
}

/// Render what one eye sees.
pub fn render_eye(stimulus: &Stimulus, eye: Eye, geom: &ViewingGeometry) -> Result<Raster> {
    render_eye_with(stimulus, eye, geom, RenderOptions::default())
}

pub fn render_eye_with(
    stimulus: &Stimulus,
    eye: Eye,
    geom: &ViewingGeometry,
    opts: RenderOptions,
) -> Result<Raster> {
    geom.validate()?;
    let (w, h) = (geom.res_w_px, geom.res_h_px);
    for d in &stimulus.discs {
        let (cx, cy, r) = disc_px(d, geom);
        if cx - r < 0.0 || cy - r < 0.0 || cx + r > w as f64 || cy + r > h as f64 {
            return Err(Error::OutOfBounds {
                id: d.id,
                width: w,
                height: h,
            });
        }
    }
    let mut raster = Raster::filled(w, h, stimulus.background);
    for d in stimulus.discs.iter().filter(|d| d.visible_to(eye)) {
        draw_disc(&mut raster, d, geom, opts);
    }
    Ok(raster)
}

pub fn render_pair(stimulus: &Stimulus, geom: &ViewingGeometry) -> Result<StereoPair> {
    render_pair_with(stimulus, geom, RenderOptions::default())
}

pub fn render_pair_with(stimulus: &Stimulus, geom: &ViewingGeometry, opts: RenderOptions) -> Result<StereoPair> {
    StereoPair::new(
        render_eye_with(stimulus, Eye::Left, geom, opts)?,
        render_eye_with(stimulus, Eye::Right, geom, opts)?,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComposeMode {
    Anaglyph,
    SideBySide,
    PerEyeFiles,
}

impl std::str::FromStr for ComposeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "anaglyph" | "ana" => Ok(ComposeMode::Anaglyph),
            "side-by-side" | "sbs" => Ok(ComposeMode::SideBySide),
            "per-eye" | "per-eye-files" => Ok(ComposeMode::PerEyeFiles),
            other => Err(format!(
                "unknown mode `{other}` (expected anaglyph, side-by-side or per-eye)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Composite {
    Single(Raster),
    PerEye { left: Raster, right: Raster },
}

impl Composite {
    /// Rasters with their file-name suffixes (`ana`, `sbs`, `L`, `R`).
    pub fn files(&self, mode: ComposeMode) -> Vec<(&'static str, &Raster)> {
        match (self, mode) {
            (Composite::Single(r), ComposeMode::SideBySide) => vec![("sbs", r)],
            (Composite::Single(r), _) => vec![("ana", r)],
            (Composite::PerEye { left, right }, _) => vec![("L", left), ("R", right)],
        }
    }
}

/// Rec. 601 luma, rounded, in integer arithmetic.
pub fn luma(rgb: [u8; 3]) -> u8 {
    ((299 * rgb[0] as u32 + 587 * rgb[1] as u32 + 114 * rgb[2] as u32 + 500) / 1000) as u8
}

pub fn compose(pair: &StereoPair, mode: ComposeMode) -> Composite {
    let (l, r) = (&pair.left, &pair.right);
    match mode {
        ComposeMode::Anaglyph => {
            let pixels = l
                .pixels
                .chunks_exact(3)
                .zip(r.pixels.chunks_exact(3))
                .flat_map(|(a, b)| {
                    let ly = luma([a[0], a[1], a[2]]);
                    let ry = luma([b[0], b[1], b[2]]);
                    [ly, ry, ry]
                })
                .collect();
            Composite::Single(Raster {
                width: l.width,
                height: l.height,
                pixels,
            })
        }
        ComposeMode::SideBySide => {
            let row = l.width as usize * 3;
            let mut pixels = Vec::with_capacity(l.pixels.len() * 2);
            for (a, b) in l.pixels.chunks_exact(row).zip(r.pixels.chunks_exact(row)) {
                pixels.extend_from_slice(a);
                pixels.extend_from_slice(b);
            }
            Composite::Single(Raster {
                width: l.width * 2,
                height: l.height,
                pixels,
            })
        }
        ComposeMode::PerEyeFiles => Composite::PerEye {
            left: l.clone(),
            right: r.clone(),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrosshairSpec {
    /// Full length of each bar.
    pub length_px: u32,
    pub thickness_px: u32,
}

impl Default for CrosshairSpec {
    fn default() -> Self {
        Self {
            length_px: 40,
            thickness_px: 4,
        }
    }
}

pub fn crosshair_rects(geom: &ViewingGeometry, spec: CrosshairSpec) -> [PixelRect; 2] {
    let (cx, cy) = (geom.res_w_px / 2, geom.res_h_px / 2);
    let (half_l, half_t) = (spec.length_px / 2, spec.thickness_px / 2);
    let horizontal = PixelRect {
        x0: cx.saturating_sub(half_l),
        y0: cy.saturating_sub(half_t),
        x1: cx.saturating_sub(half_l) + spec.length_px,
        y1: cy.saturating_sub(half_t) + spec.thickness_px,
    };
    let vertical = PixelRect {
        x0: cx.saturating_sub(half_t),
        y0: cy.saturating_sub(half_l),
        x1: cx.saturating_sub(half_t) + spec.thickness_px,
        y1: cy.saturating_sub(half_l) + spec.length_px,
    };
    [horizontal, vertical]
}

/// Fixation screen: background with a centred cross.
pub fn render_crosshair(
    geom: &ViewingGeometry,
    spec: CrosshairSpec,
    background: ColorRgb,
    color: ColorRgb,
) -> Raster {
    let mut r = Raster::filled(geom.res_w_px, geom.res_h_px, background);
    for rect in crosshair_rects(geom, spec) {
        r.fill_rect(rect, color);
    }
    r
}

/// Bounding box of all pixels that differ between two rasters.
pub fn diff_bbox(a: &Raster, b: &Raster) -> Result<Option<PixelRect>> {
    a.same_size(b)?;
    let mut out: Option<PixelRect> = None;
    let w = a.width as usize;
    for (i, (pa, pb)) in a.pixels.chunks_exact(3).zip(b.pixels.chunks_exact(3)).enumerate() {
        if pa != pb {
            let (x, y) = ((i % w) as u32, (i / w) as u32);
            let px = PixelRect {
                x0: x,
                y0: y,
                x1: x + 1,
                y1: y + 1,
            };
            out = Some(out.map_or(px, |r| r.union(&px)));
        }
    }
    Ok(out)
}
