//! Font loading, glyph rasterization and corpus filtering.
//!
//! Glyphs are normalized independently of the font's metrics: the tight
//! outline bounding box is scaled uniformly into a square inset by a
//! `ceil(0.05 * size)` margin, centered on the box center, and the
//! anti-aliased coverage is thresholded at 0.5. Foreground is 1 in memory;
//! PNGs on disk are black glyphs on white.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ab_glyph_rasterizer::{point, Point, Rasterizer};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::LETTERS;

pub const DEFAULT_SIZE: usize = 100;
pub const MIN_SIZE: usize = 16;
pub const FONTS_FILE: &str = "fonts.jsonl";
pub const REJECTED_FILE: &str = "rejected.jsonl";

const FONT_EXTENSIONS: [&str; 4] = ["ttf", "otf", "ttc", "otc"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FontRecord {
    pub font_id: String,
    pub file_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_tag: Option<String>,
    /// Hex SHA-256 of the font file, used for provenance checks.
    pub sha256: String,
}

/// A parsed-once font: its record plus the raw file bytes.
#[derive(Debug, Clone)]
pub struct Font {
    pub record: FontRecord,
    data: Arc<Vec<u8>>,
}

impl Font {
    pub fn from_bytes(record: FontRecord, data: Vec<u8>) -> Result<Self> {
        check_parseable(&record.file_path, &data)?;
        Ok(Font { record, data: Arc::new(data) })
    }

    fn face(&self) -> ttf_parser::Face<'_> {
        // Validated in `from_bytes`.
        ttf_parser::Face::parse(&self.data, 0).expect("font validated at load time")
    }
}

fn check_parseable(path: &Path, data: &[u8]) -> Result<()> {
    let face = ttf_parser::Face::parse(data, 0)
        .map_err(|e| Error::UnparseableFont { path: path.to_path_buf(), reason: e.to_string() })?;
    let tables = face.tables();
    if tables.glyf.is_none() && tables.cff.is_none() && tables.cff2.is_none() {
        return Err(Error::UnparseableFont {
            path: path.to_path_buf(),
            reason: "no glyf/CFF outline tables".into(),
        });
    }
    Ok(())
}

/// `serif/Foo.ttf` under `root` becomes `serif__Foo.ttf`.
pub fn font_id_for(path: &Path, root: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or_else(|_| Path::new(path.file_name().unwrap_or(path.as_os_str())));
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("__")
}

/// Loads a font file found under corpus directory `root`.
///
/// The family tag is the first directory below `root`, when there is one.
pub fn load_font(path: &Path, root: &Path) -> Result<Font> {
    let data = fs::read(path).map_err(|source| Error::UnreadableFile { path: path.to_path_buf(), source })?;
    let family_tag = path.strip_prefix(root).ok().and_then(|rel| {
        let mut comps = rel.components();
        let first = comps.next()?;
        comps.next().map(|_| first.as_os_str().to_string_lossy().into_owned())
    });
    let record = FontRecord {
        font_id: font_id_for(path, root),
        file_path: path.to_path_buf(),
        family_tag,
        sha256: hex::encode(Sha256::digest(&data)),
    };
    Font::from_bytes(record, data)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlyphImage {
    pub size: usize,
    /// Row-major, 1 = foreground.
    pub pixels: Vec<u8>,
    pub char_class: char,
    pub font_id: String,
}

impl GlyphImage {
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.size + x]
    }

    pub fn foreground(&self) -> usize {
        self.pixels.iter().filter(|&&p| p == 1).count()
    }

    pub fn ink_fraction(&self) -> f64 {
        self.foreground() as f64 / self.pixels.len() as f64
    }

    /// 8-bit grayscale PNG, glyph black (0) on white (255).
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let data: Vec<u8> = self.pixels.iter().map(|&p| if p == 1 { 0 } else { 255 }).collect();
        write_gray_png(path, self.size as u32, self.size as u32, &data)
    }

    pub fn read_png(path: &Path, char_class: char, font_id: &str) -> Result<Self> {
        let (w, h, gray) = read_gray_png(path)?;
        if w != h {
            return Err(Error::format(path.display().to_string(), format!("glyph image is {w}x{h}, expected square")));
        }
        Ok(GlyphImage {
            size: w as usize,
            pixels: gray.iter().map(|&v| u8::from(v < 128)).collect(),
            char_class,
            font_id: font_id.to_string(),
        })
    }
}

pub(crate) fn write_gray_png(path: &Path, width: u32, height: u32, data: &[u8]) -> Result<()> {
    write_png(path, width, height, png::ColorType::Grayscale, data)
}

/// Writes 8-bit PNG data of the given color type, creating parent dirs.
pub fn write_png(path: &Path, width: u32, height: u32, color: png::ColorType, data: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width, height);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| Error::format(path.display().to_string(), e))?;
    writer.write_image_data(data).map_err(|e| Error::format(path.display().to_string(), e))?;
    writer.finish().map_err(|e| Error::format(path.display().to_string(), e))
}

/// Decodes any PNG to 8-bit gray by taking the first channel.
pub(crate) fn read_gray_png(path: &Path) -> Result<(u32, u32, Vec<u8>)> {
    let (w, h, channels, data) = read_png(path)?;
    Ok((w, h, data.chunks(channels).map(|px| px[0]).collect()))
}

/// Decodes any PNG to 8-bit samples: `(width, height, channels, data)`.
pub fn read_png(path: &Path) -> Result<(u32, u32, usize, Vec<u8>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| Error::format(path.display().to_string(), e))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::format(path.display().to_string(), e))?;
    buf.truncate(info.buffer_size());
    let channels = info.color_type.samples();
    Ok((info.width, info.height, channels, buf))
}

pub fn margin_for(size: usize) -> usize {
    (size as f64 * 0.05).ceil() as usize
}

#[derive(Debug, Clone, Copy)]
enum Segment {
    Line(Point, Point),
    Quad(Point, Point, Point),
    Cubic(Point, Point, Point, Point),
}

#[derive(Default)]
struct OutlineCollector {
    segments: Vec<Segment>,
    start: Option<Point>,
    last: Option<Point>,
}

impl ttf_parser::OutlineBuilder for OutlineCollector {
    fn move_to(&mut self, x: f32, y: f32) {
        self.start = Some(point(x, y));
        self.last = self.start;
    }

    fn line_to(&mut self, x: f32, y: f32) {
        let p = point(x, y);
        if let Some(last) = self.last {
            self.segments.push(Segment::Line(last, p));
        }
        self.last = Some(p);
    }

    fn quad_to(&mut self, x1: f32, y1: f32, x: f32, y: f32) {
        let p = point(x, y);
        if let Some(last) = self.last {
            self.segments.push(Segment::Quad(last, point(x1, y1), p));
        }
        self.last = Some(p);
    }

    fn curve_to(&mut self, x1: f32, y1: f32, x2: f32, y2: f32, x: f32, y: f32) {
        let p = point(x, y);
        if let Some(last) = self.last {
            self.segments.push(Segment::Cubic(last, point(x1, y1), point(x2, y2), p));
        }
        self.last = Some(p);
    }

    fn close(&mut self) {
        if let (Some(last), Some(start)) = (self.last, self.start) {
            if last != start {
                self.segments.push(Segment::Line(last, start));
            }
        }
        self.last = self.start;
    }
}

#[derive(Debug, Clone, Copy)]
struct BBox {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl BBox {
    fn empty() -> Self {
        BBox { x0: f64::INFINITY, y0: f64::INFINITY, x1: f64::NEG_INFINITY, y1: f64::NEG_INFINITY }
    }

    fn add(&mut self, x: f64, y: f64) {
        self.x0 = self.x0.min(x);
        self.y0 = self.y0.min(y);
        self.x1 = self.x1.max(x);
        self.y1 = self.y1.max(y);
    }
}

fn quad_at(a: f64, b: f64, c: f64, t: f64) -> f64 {
    let u = 1.0 - t;
    u * u * a + 2.0 * u * t * b + t * t * c
}

fn cubic_at(a: f64, b: f64, c: f64, d: f64, t: f64) -> f64 {
    let u = 1.0 - t;
    u * u * u * a + 3.0 * u * u * t * b + 3.0 * u * t * t * c + t * t * t * d
}

/// Parameters in (0,1) where the 1-D cubic Bezier derivative vanishes.
fn cubic_extrema(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    // B'(t)/3 = qa t^2 + qb t + qc
    let qa = -a + 3.0 * b - 3.0 * c + d;
    let qb = 2.0 * (a - 2.0 * b + c);
    let qc = b - a;
    let mut roots = Vec::new();
    if qa.abs() < 1e-12 {
        if qb.abs() > 1e-12 {
            roots.push(-qc / qb);
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            roots.push((-qb + sq) / (2.0 * qa));
            roots.push((-qb - sq) / (2.0 * qa));
        }
    }
    roots.retain(|t| *t > 0.0 && *t < 1.0);
    roots
}

/// Exact bounding box of the drawn curves (not of the control points).
fn tight_bbox(segments: &[Segment]) -> BBox {
    let mut bb = BBox::empty();
    for seg in segments {
        match *seg {
            Segment::Line(p0, p1) => {
                bb.add(p0.x as f64, p0.y as f64);
                bb.add(p1.x as f64, p1.y as f64);
            }
            Segment::Quad(p0, p1, p2) => {
                bb.add(p0.x as f64, p0.y as f64);
                bb.add(p2.x as f64, p2.y as f64);
                let (xs, ys) = ([p0.x, p1.x, p2.x].map(f64::from), [p0.y, p1.y, p2.y].map(f64::from));
                for vals in [xs, ys] {
                    let denom = vals[0] - 2.0 * vals[1] + vals[2];
                    if denom.abs() > 1e-12 {
                        let t = (vals[0] - vals[1]) / denom;
                        if t > 0.0 && t < 1.0 {
                            bb.add(quad_at(xs[0], xs[1], xs[2], t), quad_at(ys[0], ys[1], ys[2], t));
                        }
                    }
                }
            }
            Segment::Cubic(p0, p1, p2, p3) => {
                bb.add(p0.x as f64, p0.y as f64);
                bb.add(p3.x as f64, p3.y as f64);
                let xs = [p0.x, p1.x, p2.x, p3.x].map(f64::from);
                let ys = [p0.y, p1.y, p2.y, p3.y].map(f64::from);
                let mut ts = cubic_extrema(xs[0], xs[1], xs[2], xs[3]);
                ts.extend(cubic_extrema(ys[0], ys[1], ys[2], ys[3]));
                for t in ts {
                    bb.add(cubic_at(xs[0], xs[1], xs[2], xs[3], t), cubic_at(ys[0], ys[1], ys[2], ys[3], t));
                }
            }
        }
    }
    bb
}

/// Renders one uppercase letter into a `size`x`size` binary image.
pub fn rasterize_glyph(font: &Font, char_class: char, size: usize) -> Result<GlyphImage> {
    if !char_class.is_ascii_uppercase() {
        return Err(Error::InvalidArgument(format!("character class must be A-Z, got {char_class:?}")));
    }
    if size < MIN_SIZE {
        return Err(Error::InvalidArgument(format!("raster size must be at least {MIN_SIZE}, got {size}")));
    }
    let missing = || Error::MissingGlyph { font_id: font.record.font_id.clone(), letter: char_class };
    let face = font.face();
    let gid = face.glyph_index(char_class).ok_or_else(missing)?;
    let mut outline = OutlineCollector::default();
    face.outline_glyph(gid, &mut outline).ok_or_else(missing)?;
    if outline.segments.is_empty() {
        return Err(missing());
    }

    let bb = tight_bbox(&outline.segments);
    let extent = (bb.x1 - bb.x0).max(bb.y1 - bb.y0);
    if !extent.is_finite() || extent <= 0.0 {
        return Err(missing());
    }
    let margin = margin_for(size);
    let scale = (size - 2 * margin) as f64 / extent;
    let (cx, cy) = ((bb.x0 + bb.x1) / 2.0, (bb.y0 + bb.y1) / 2.0);
    let half = size as f64 / 2.0;
    let map = |p: Point| point(((p.x as f64 - cx) * scale + half) as f32, (half - (p.y as f64 - cy) * scale) as f32);

    let mut raster = Rasterizer::new(size, size);
    for seg in &outline.segments {
        match *seg {
            Segment::Line(a, b) => raster.draw_line(map(a), map(b)),
            Segment::Quad(a, b, c) => raster.draw_quad(map(a), map(b), map(c)),
            Segment::Cubic(a, b, c, d) => raster.draw_cubic(map(a), map(b), map(c), map(d)),
        }
    }
    let mut pixels = vec![0u8; size * size];
    raster.for_each_pixel(|idx, coverage| pixels[idx] = u8::from(coverage >= 0.5));

    let glyph = GlyphImage { size, pixels, char_class, font_id: font.record.font_id.clone() };
    if glyph.foreground() == 0 {
        return Err(missing());
    }
    Ok(glyph)
}

/// All 26 glyphs of one font, in A..Z order.
#[derive(Debug, Clone)]
pub struct RasterizedFont {
    pub record: FontRecord,
    pub glyphs: Vec<GlyphImage>,
}

impl RasterizedFont {
    pub fn mean_ink_fraction(&self) -> f64 {
        self.glyphs.iter().map(GlyphImage::ink_fraction).sum::<f64>() / self.glyphs.len() as f64
    }
}

pub fn rasterize_font(font: &Font, size: usize) -> Result<RasterizedFont> {
    let mut glyphs = Vec::with_capacity(LETTERS.len());
    let mut failed = Vec::new();
    for &letter in &LETTERS {
        match rasterize_glyph(font, letter, size) {
            Ok(g) => glyphs.push(g),
            Err(Error::MissingGlyph { .. }) => failed.push(letter),
            Err(e) => return Err(e),
        }
    }
    if !failed.is_empty() {
        return Err(Error::FontRejected { font_id: font.record.font_id.clone(), letters: failed });
    }
    Ok(RasterizedFont { record: font.record.clone(), glyphs })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InkBounds {
    pub low: f64,
    pub high: f64,
}

impl Default for InkBounds {
    fn default() -> Self {
        InkBounds { low: 0.01, high: 0.60 }
    }
}

/// One line of `rejected.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub font_id: String,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Drops manually excluded fonts and fonts whose mean ink fraction lies
/// outside `ink`. Returns the kept fonts and an audit entry per drop.
pub fn filter_fonts(
    fonts: Vec<RasterizedFont>,
    exclusion: &HashSet<String>,
    ink: InkBounds,
) -> Result<(Vec<RasterizedFont>, Vec<Rejection>)> {
    if !(0.0 <= ink.low && ink.low < ink.high && ink.high <= 1.0) {
        return Err(Error::InvalidArgument(format!("ink bounds must satisfy 0 <= low < high <= 1, got {ink:?}")));
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for font in fonts {
        if exclusion.contains(&font.record.font_id) {
            dropped.push(Rejection { font_id: font.record.font_id.clone(), reason: "manual".into(), detail: None });
            continue;
        }
        let frac = font.mean_ink_fraction();
        if frac < ink.low || frac > ink.high {
            dropped.push(Rejection {
                font_id: font.record.font_id.clone(),
                reason: "ink_fraction".into(),
                detail: Some(format!("{frac:.4}")),
            });
            continue;
        }
        kept.push(font);
    }
    Ok((kept, dropped))
}

/// One line of `fonts.jsonl`. Glyph paths are relative to the dataset dir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FontEntry {
    pub font_id: String,
    pub file_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_tag: Option<String>,
    pub sha256: String,
    pub glyphs: BTreeMap<char, PathBuf>,
}

/// A built glyph dataset: the directory plus its `fonts.jsonl` entries.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub fonts: Vec<FontEntry>,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let root = root.canonicalize().map_err(|e| Error::io(root, e))?;
        let fonts = read_jsonl(&root.join(FONTS_FILE))?;
        Ok(Dataset { root, fonts })
    }

    pub fn font_ids(&self) -> Vec<String> {
        self.fonts.iter().map(|f| f.font_id.clone()).collect()
    }

    pub fn entry(&self, font_id: &str) -> Option<&FontEntry> {
        self.fonts.iter().find(|f| f.font_id == font_id)
    }

    /// Absolute path of a glyph PNG.
    pub fn glyph_path(&self, entry: &FontEntry, letter: char) -> Option<PathBuf> {
        entry.glyphs.get(&letter).map(|p| self.root.join(p))
    }
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub size: usize,
    pub exclude: HashSet<String>,
    pub ink: InkBounds,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { size: DEFAULT_SIZE, exclude: HashSet::new(), ink: InkBounds::default() }
    }
}

#[derive(Debug, Clone)]
pub struct BuildSummary {
    pub kept: Vec<FontEntry>,
    pub rejected: Vec<Rejection>,
}

/// Recursively lists font files under `dir`, sorted by path.
pub fn find_font_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(dir).follow_links(true) {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            Error::io(path, e.into())
        })?;
        let is_font = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| FONT_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if entry.file_type().is_file() && is_font {
            files.push(entry.into_path());
        }
    }
    files.sort();
    Ok(files)
}

/// Rasterizes every font under `fonts_dir` into `out`, writing
/// `<font_id>/<LETTER>.png`, `fonts.jsonl` and `rejected.jsonl`.
pub fn build_dataset(fonts_dir: &Path, out: &Path, opts: &BuildOptions) -> Result<BuildSummary> {
    let files = find_font_files(fonts_dir)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let results: Vec<std::result::Result<RasterizedFont, Rejection>> = files
        .par_iter()
        .map(|path| {
            let font = load_font(path, fonts_dir).map_err(|e| Rejection {
                font_id: font_id_for(path, fonts_dir),
                reason: match e {
                    Error::UnreadableFile { .. } => "unreadable".into(),
                    _ => "unparseable".into(),
                },
                detail: Some(e.to_string()),
            })?;
            rasterize_font(&font, opts.size).map_err(|e| Rejection {
                font_id: font.record.font_id.clone(),
                reason: "missing_glyphs".into(),
                detail: Some(match e {
                    Error::FontRejected { letters, .. } => letters.iter().collect(),
                    other => other.to_string(),
                }),
            })
        })
        .collect();

    let mut rasterized = Vec::new();
    let mut rejected = Vec::new();
    for r in results {
        match r {
            Ok(f) => rasterized.push(f),
            Err(rej) => rejected.push(rej),
        }
    }
    let (kept, dropped) = filter_fonts(rasterized, &opts.exclude, opts.ink)?;
    rejected.extend(dropped);

    let entries: Vec<FontEntry> = kept
        .par_iter()
        .map(|font| {
            let mut glyphs = BTreeMap::new();
            for g in &font.glyphs {
                let rel = PathBuf::from(&font.record.font_id).join(format!("{}.png", g.char_class));
                g.write_png(&out.join(&rel))?;
                glyphs.insert(g.char_class, rel);
            }
            Ok(FontEntry {
                font_id: font.record.font_id.clone(),
                file_path: font.record.file_path.clone(),
                family_tag: font.record.family_tag.clone(),
                sha256: font.record.sha256.clone(),
                glyphs,
            })
        })
        .collect::<Result<_>>()?;

    write_jsonl(&out.join(FONTS_FILE), &entries)?;
    write_jsonl(&out.join(REJECTED_FILE), &rejected)?;
    Ok(BuildSummary { kept: entries, rejected })
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::format(path.display().to_string(), e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::format(format!("{}:{}", path.display(), i + 1), e))?,
        );
    }
    Ok(items)
}

/// Decoded binary glyphs keyed by file path. All images share one size.
#[derive(Debug, Clone, Default)]
pub struct GlyphStore {
    size: usize,
    images: HashMap<PathBuf, Arc<Vec<u8>>>,
}

impl GlyphStore {
    /// Decodes every distinct path once, in parallel.
    pub fn load<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<Self> {
        let unique: Vec<&Path> = paths.into_iter().collect::<HashSet<_>>().into_iter().collect();
        let decoded: Vec<(PathBuf, GlyphImage)> = unique
            .par_iter()
            .map(|&p| {
                if !p.is_file() {
                    return Err(Error::MissingGlyphFile { path: p.to_path_buf() });
                }
                Ok((p.to_path_buf(), GlyphImage::read_png(p, '?', "")?))
            })
            .collect::<Result<_>>()?;
        let mut store = GlyphStore::default();
        for (path, img) in decoded {
            if store.size == 0 {
                store.size = img.size;
            } else if img.size != store.size {
                return Err(Error::ShapeMismatch(format!(
                    "{} is {}x{}, other glyphs are {}x{}",
                    path.display(),
                    img.size,
                    img.size,
                    store.size,
                    store.size
                )));
            }
            store.images.insert(path, Arc::new(img.pixels));
        }
        Ok(store)
    }

    /// Side length of the stored images (0 when empty).
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn get(&self, path: &Path) -> Result<&[u8]> {
        self.images
            .get(path)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::MissingGlyphFile { path: path.to_path_buf() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn font_id_replaces_separators() {
        let root = Path::new("/fonts");
        assert_eq!(font_id_for(Path::new("/fonts/serif/Foo.ttf"), root), "serif__Foo.ttf");
        assert_eq!(font_id_for(Path::new("/fonts/Bar.otf"), root), "Bar.otf");
        assert_eq!(font_id_for(Path::new("/elsewhere/Baz.ttf"), root), "Baz.ttf");
    }

    #[test]
    fn margin_rounds_up() {
        assert_eq!(margin_for(100), 5);
        assert_eq!(margin_for(16), 1);
        assert_eq!(margin_for(21), 2);
    }

    #[test]
    fn cubic_bbox_includes_bulge() {
        // Symmetric arch from (0,0) to (10,0) with control points at y=10:
        // the apex is at y = 7.5, above the endpoints but below the controls.
        let seg = Segment::Cubic(point(0.0, 0.0), point(0.0, 10.0), point(10.0, 10.0), point(10.0, 0.0));
        let bb = tight_bbox(&[seg]);
        assert!((bb.y1 - 7.5).abs() < 1e-9, "{}", bb.y1);
        assert_eq!(bb.y0, 0.0);
    }

    #[test]
    fn quad_bbox_is_tight() {
        let seg = Segment::Quad(point(0.0, 0.0), point(5.0, 10.0), point(10.0, 0.0));
        let bb = tight_bbox(&[seg]);
        assert!((bb.y1 - 5.0).abs() < 1e-9);
        assert_eq!((bb.x0, bb.x1), (0.0, 10.0));
    }

    #[test]
    fn filter_rejects_bad_bounds() {
        let err = filter_fonts(Vec::new(), &HashSet::new(), InkBounds { low: 0.5, high: 0.5 }).unwrap_err();
        assert_eq!(err.code(), "core.invalid_argument");
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut pixels = vec![0u8; 16 * 16];
        pixels[17] = 1;
        pixels[200] = 1;
        let g = GlyphImage { size: 16, pixels, char_class: 'Q', font_id: "f".into() };
        let path = dir.path().join("g.png");
        g.write_png(&path).unwrap();
        assert_eq!(GlyphImage::read_png(&path, 'Q', "f").unwrap(), g);
    }
}
