//! Parametric TrueType font generator.
//!
//! Every font is a 26-letter uppercase alphabet drawn by sweeping a
//! superelliptic pen nib along fixed letter skeletons. The style knobs
//! (nib size, contrast, nib angle, slant, width, serifs, bowl shape,
//! crossbar height) are sampled from a seeded RNG, so a corpus of any size
//! can be regenerated bit-for-bit from `(count, seed)`.
//!
//! The output is an ordinary `glyf`-flavoured TrueType file that any font
//! parser accepts; nothing downstream knows the fonts are synthetic.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use kurbo::BezPath;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use write_fonts::tables::cmap::Cmap;
use write_fonts::tables::glyf::{GlyfLocaBuilder, SimpleGlyph};
use write_fonts::tables::head::Head;
use write_fonts::tables::hhea::Hhea;
use write_fonts::tables::hmtx::{Hmtx, LongMetric};
use write_fonts::tables::loca::LocaFormat;
use write_fonts::tables::maxp::Maxp;
use write_fonts::types::GlyphId;
use write_fonts::FontBuilder;

pub const CAP_HEIGHT: f64 = 700.0;
const UNITS_PER_EM: u16 = 1000;
const NIB_POINTS: usize = 16;
const ARC_STEPS: usize = 28;

/// Style parameters shared by every glyph of one font. Lengths are in font
/// units against a cap height of 700.
#[derive(Debug, Clone, PartialEq)]
pub struct Style {
    /// Major axis of the pen nib.
    pub stroke: f64,
    /// Minor/major nib axis ratio; 1.0 is a monoline pen.
    pub contrast: f64,
    /// Nib rotation in radians.
    pub nib_angle: f64,
    /// Superellipse exponent of the nib (2 = ellipse, larger = squarer).
    pub nib_squareness: f64,
    /// Horizontal shear applied to the finished outline.
    pub slant: f64,
    /// Horizontal scale of the letter skeletons.
    pub width: f64,
    /// Serif length; zero for sans-serif.
    pub serif: f64,
    /// Crossbar height as a fraction of cap height.
    pub crossbar: f64,
    /// Superellipse exponent of round letters.
    pub bowl_squareness: f64,
}

impl Default for Style {
    fn default() -> Self {
        Style {
            stroke: 80.0,
            contrast: 0.6,
            nib_angle: 0.5,
            nib_squareness: 2.0,
            slant: 0.0,
            width: 1.0,
            serif: 0.0,
            crossbar: 0.48,
            bowl_squareness: 2.0,
        }
    }
}

impl Style {
    pub fn sample<R: Rng>(rng: &mut R) -> Self {
        let serif = if rng.random_bool(0.45) { rng.random_range(40.0..150.0) } else { 0.0 };
        let slant = if rng.random_bool(0.35) { rng.random_range(0.05..0.3) } else { 0.0 };
        let bowl_squareness = if rng.random_bool(0.3) {
            rng.random_range(3.0..6.0)
        } else {
            rng.random_range(1.8..2.6)
        };
        Style {
            stroke: rng.random_range(28.0..135.0),
            contrast: rng.random_range(0.18..1.0),
            nib_angle: rng.random_range(-0.9..0.9),
            nib_squareness: rng.random_range(2.0..7.0),
            slant,
            width: rng.random_range(0.65..1.4),
            serif,
            crossbar: rng.random_range(0.38..0.6),
            bowl_squareness,
        }
    }
}

/// What to put in a font file.
#[derive(Debug, Clone)]
pub struct FontSpec {
    pub name: String,
    pub style: Style,
    /// Letters that get no outline (mapped to an empty glyph).
    pub omit: Vec<char>,
    /// Replace every glyph by a filled block, mimicking an icon font.
    pub solid: bool,
}

impl FontSpec {
    pub fn new(name: impl Into<String>, style: Style) -> Self {
        FontSpec { name: name.into(), style, omit: Vec::new(), solid: false }
    }
}

type Pt = (f64, f64);

/// Letter skeleton: open polylines in unsheared font units.
fn skeleton(letter: char, s: &Style) -> Vec<Vec<Pt>> {
    let h = CAP_HEIGHT;
    let c = s.crossbar * h;
    let base = match letter {
        'A' => 560.0,
        'B' => 470.0,
        'C' => 520.0,
        'D' => 520.0,
        'E' => 420.0,
        'F' => 400.0,
        'G' => 540.0,
        'H' => 520.0,
        'I' => 0.0,
        'J' => 360.0,
        'K' => 500.0,
        'L' => 400.0,
        'M' => 640.0,
        'N' => 520.0,
        'O' => 580.0,
        'P' => 460.0,
        'Q' => 580.0,
        'R' => 480.0,
        'S' => 440.0,
        'T' => 480.0,
        'U' => 520.0,
        'V' => 540.0,
        'W' => 760.0,
        'X' => 520.0,
        'Y' => 520.0,
        'Z' => 460.0,
        _ => panic!("unsupported letter {letter:?}"),
    };
    let w = base * s.width;
    let n = s.bowl_squareness;
    let stem = |x: f64| vec![(x, 0.0), (x, h)];
    let hbar = |x0: f64, x1: f64, y: f64| vec![(x0, y), (x1, y)];
    match letter {
        'A' => {
            let yc = c * 0.7;
            let xl = w / 2.0 * (yc / h);
            vec![vec![(0.0, 0.0), (w / 2.0, h), (w, 0.0)], hbar(xl, w - xl, yc)]
        }
        'B' => vec![stem(0.0), bowl(0.0, c, h, 0.88 * w, n), bowl(0.0, 0.0, c, w, n)],
        'C' => vec![arc((w / 2.0, h / 2.0), (w / 2.0, h / 2.0), 0.7, 2.0 * PI - 0.7, n)],
        'D' => vec![stem(0.0), bowl_with(0.0, 0.0, h, w, 0.35, n)],
        'E' => vec![stem(0.0), hbar(0.0, w, h), hbar(0.0, 0.85 * w, c), hbar(0.0, w, 0.0)],
        'F' => vec![stem(0.0), hbar(0.0, w, h), hbar(0.0, 0.85 * w, c)],
        'G' => {
            let mut bowl = arc((w / 2.0, h / 2.0), (w / 2.0, h / 2.0), 0.75, 2.0 * PI, n);
            bowl.push((0.55 * w, h / 2.0));
            vec![bowl]
        }
        'H' => vec![stem(0.0), stem(w), hbar(0.0, w, c)],
        'I' => vec![stem(0.0)],
        'J' => {
            let mut hook = vec![(w, h)];
            hook.extend(arc((w / 2.0, 0.3 * h), (w / 2.0, 0.3 * h), 0.0, -PI, n));
            vec![hook]
        }
        'K' => vec![stem(0.0), vec![(w, h), (0.0, 0.4 * h)], vec![(0.3 * w, 0.58 * h), (w, 0.0)]],
        'L' => vec![stem(0.0), hbar(0.0, w, 0.0)],
        'M' => vec![vec![(0.0, 0.0), (0.0, h), (w / 2.0, 0.05 * h), (w, h), (w, 0.0)]],
        'N' => vec![vec![(0.0, 0.0), (0.0, h), (w, 0.0), (w, h)]],
        'O' => vec![arc((w / 2.0, h / 2.0), (w / 2.0, h / 2.0), 0.0, 2.0 * PI, n)],
        'P' => vec![stem(0.0), bowl(0.0, c * 0.95, h, w, n)],
        'Q' => vec![
            arc((w / 2.0, h / 2.0), (w / 2.0, h / 2.0), 0.0, 2.0 * PI, n),
            vec![(0.55 * w, 0.22 * h), (1.02 * w, -0.06 * h)],
        ],
        'R' => vec![stem(0.0), bowl(0.0, c * 0.95, h, 0.92 * w, n), vec![(0.45 * w, c * 0.95), (w, 0.0)]],
        'S' => {
            let mut spine = arc((w / 2.0, 0.75 * h), (w / 2.0, 0.25 * h), 0.45, 1.5 * PI, n);
            spine.extend(arc((w / 2.0, 0.25 * h), (w / 2.0, 0.25 * h), FRAC_PI_2, -0.85 * PI, n).into_iter().skip(1));
            vec![spine]
        }
        'T' => vec![hbar(0.0, w, h), vec![(w / 2.0, h), (w / 2.0, 0.0)]],
        'U' => {
            let mut cup = vec![(0.0, h)];
            cup.extend(arc((w / 2.0, 0.35 * h), (w / 2.0, 0.35 * h), PI, 2.0 * PI, n));
            cup.push((w, h));
            vec![cup]
        }
        'V' => vec![vec![(0.0, h), (w / 2.0, 0.0), (w, h)]],
        'W' => vec![vec![(0.0, h), (0.25 * w, 0.0), (0.5 * w, 0.8 * h), (0.75 * w, 0.0), (w, h)]],
        'X' => vec![vec![(0.0, h), (w, 0.0)], vec![(w, h), (0.0, 0.0)]],
        'Y' => {
            let yj = 0.45 * h;
            vec![vec![(0.0, h), (w / 2.0, yj), (w, h)], vec![(w / 2.0, yj), (w / 2.0, 0.0)]]
        }
        'Z' => vec![vec![(0.0, h), (w, h), (0.0, 0.0), (w, 0.0)]],
        _ => unreachable!(),
    }
}

fn se_pow(v: f64, n: f64) -> f64 {
    v.signum() * v.abs().powf(2.0 / n)
}

/// Superellipse arc from angle `t0` to `t1` (either direction).
fn arc(center: Pt, radii: Pt, t0: f64, t1: f64, n: f64) -> Vec<Pt> {
    let steps = ((t1 - t0).abs() / (2.0 * PI) * ARC_STEPS as f64 * 2.0).ceil().max(4.0) as usize;
    (0..=steps)
        .map(|i| {
            let t = t0 + (t1 - t0) * i as f64 / steps as f64;
            (center.0 + radii.0 * se_pow(t.cos(), n), center.1 + radii.1 * se_pow(t.sin(), n))
        })
        .collect()
}

fn bowl(x0: f64, yb: f64, yt: f64, xr: f64, n: f64) -> Vec<Pt> {
    bowl_with(x0, yb, yt, xr, 0.45, n)
}

/// Straight top, half-superellipse on the right, straight bottom.
fn bowl_with(x0: f64, yb: f64, yt: f64, xr: f64, flat: f64, n: f64) -> Vec<Pt> {
    let xm = x0 + flat * (xr - x0);
    let ym = (yb + yt) / 2.0;
    let mut pts = vec![(x0, yt)];
    pts.extend(arc((xm, ym), (xr - xm, (yt - yb) / 2.0), FRAC_PI_2, -FRAC_PI_2, n));
    pts.push((x0, yb));
    pts
}

fn nib(style: &Style, major: f64, minor: f64) -> Vec<Pt> {
    let (sin, cos) = style.nib_angle.sin_cos();
    (0..NIB_POINTS)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / NIB_POINTS as f64;
            let x = major / 2.0 * se_pow(t.cos(), style.nib_squareness);
            let y = minor / 2.0 * se_pow(t.sin(), style.nib_squareness);
            (x * cos - y * sin, x * sin + y * cos)
        })
        .collect()
}

/// Convex hull (monotone chain), returned clockwise.
fn convex_hull(mut pts: Vec<Pt>) -> Vec<Pt> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Pt, a: Pt, b: Pt| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut lower: Vec<Pt> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Pt> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower.reverse();
    lower
}

/// Sweeps the nib along each skeleton segment; every segment becomes one
/// clockwise convex contour.
fn sweep(path: &[Pt], pen: &[Pt], contours: &mut Vec<Vec<Pt>>) {
    for seg in path.windows(2) {
        let mut pts = Vec::with_capacity(pen.len() * 2);
        for &(px, py) in &[seg[0], seg[1]] {
            pts.extend(pen.iter().map(|&(dx, dy)| (px + dx, py + dy)));
        }
        contours.push(convex_hull(pts));
    }
}

fn glyph_contours(letter: char, style: &Style, solid: bool) -> Vec<Vec<Pt>> {
    if solid {
        let side = CAP_HEIGHT;
        return vec![vec![(0.0, 0.0), (0.0, side), (side, side), (side, 0.0)]];
    }
    let minor = (style.stroke * style.contrast).max(14.0);
    let pen = nib(style, style.stroke, minor);
    let serif_pen = nib(&Style { nib_angle: 0.0, nib_squareness: 4.0, ..style.clone() }, minor, minor);
    let mut contours = Vec::new();
    for path in skeleton(letter, style) {
        sweep(&path, &pen, &mut contours);
        if style.serif > 0.0 {
            for (end, next) in [(path[0], path[1]), (path[path.len() - 1], path[path.len() - 2])] {
                let on_line = end.1.abs() < 1.0 || (end.1 - CAP_HEIGHT).abs() < 1.0;
                let steep = (next.1 - end.1).abs() >= (next.0 - end.0).abs();
                if on_line && steep {
                    let half = style.serif / 2.0;
                    sweep(&[(end.0 - half, end.1), (end.0 + half, end.1)], &serif_pen, &mut contours);
                }
            }
        }
    }
    contours
}

struct BuiltGlyph {
    path: BezPath,
    x_min: i16,
    x_max: i16,
    y_min: i16,
    y_max: i16,
}

fn build_glyph(contours: &[Vec<Pt>], slant: f64) -> BuiltGlyph {
    let mut path = BezPath::new();
    let (mut x_min, mut x_max, mut y_min, mut y_max) = (i16::MAX, i16::MIN, i16::MAX, i16::MIN);
    for contour in contours {
        let mut pts: Vec<(i16, i16)> = contour
            .iter()
            .map(|&(x, y)| ((x + slant * y).round() as i16, y.round() as i16))
            .collect();
        pts.dedup();
        if pts.len() > 1 && pts.first() == pts.last() {
            pts.pop();
        }
        if pts.len() < 3 {
            continue;
        }
        for (i, &(x, y)) in pts.iter().enumerate() {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
            if i == 0 {
                path.move_to((x as f64, y as f64));
            } else {
                path.line_to((x as f64, y as f64));
            }
        }
        path.close_path();
    }
    if path.elements().is_empty() {
        x_min = 0;
        x_max = 0;
        y_min = 0;
        y_max = 0;
    }
    BuiltGlyph { path, x_min, x_max, y_min, y_max }
}

/// Compiles a font to TrueType bytes.
pub fn build_font(spec: &FontSpec) -> Vec<u8> {
    let letters: Vec<char> = ('A'..='Z').collect();
    let mut glyphs = vec![BuiltGlyph { path: BezPath::new(), x_min: 0, x_max: 0, y_min: 0, y_max: 0 }];
    for &letter in &letters {
        if spec.omit.contains(&letter) {
            glyphs.push(BuiltGlyph { path: BezPath::new(), x_min: 0, x_max: 0, y_min: 0, y_max: 0 });
        } else {
            glyphs.push(build_glyph(&glyph_contours(letter, &spec.style, spec.solid), spec.style.slant));
        }
    }

    let mut glyf_builder = GlyfLocaBuilder::new();
    for g in &glyphs {
        let simple = SimpleGlyph::from_bezpath(&g.path).expect("closed polygonal contours");
        glyf_builder.add_glyph(&simple).expect("valid glyph");
    }
    let (glyf, loca, loca_format) = glyf_builder.build();

    let inked: Vec<&BuiltGlyph> = glyphs.iter().filter(|g| !g.path.elements().is_empty()).collect();
    let x_min = inked.iter().map(|g| g.x_min).min().unwrap_or(0);
    let x_max = inked.iter().map(|g| g.x_max).max().unwrap_or(0);
    let y_min = inked.iter().map(|g| g.y_min).min().unwrap_or(0);
    let y_max = inked.iter().map(|g| g.y_max).max().unwrap_or(0);

    let sidebearing = 60i16;
    let metrics: Vec<LongMetric> = glyphs
        .iter()
        .map(|g| {
            let advance = (g.x_max as i32 - g.x_min as i32 + 2 * sidebearing as i32).max(200) as u16;
            LongMetric::new(advance, g.x_min)
        })
        .collect();
    let advance_max = metrics.iter().map(|m| m.advance).max().unwrap_or(0);

    let head = Head {
        units_per_em: UNITS_PER_EM,
        x_min,
        y_min,
        x_max,
        y_max,
        lowest_rec_ppem: 8,
        index_to_loc_format: match loca_format {
            LocaFormat::Short => 0,
            LocaFormat::Long => 1,
        },
        ..Default::default()
    };
    let hhea = Hhea {
        ascender: 800.into(),
        descender: (-200).into(),
        advance_width_max: advance_max.into(),
        min_left_side_bearing: x_min.into(),
        x_max_extent: x_max.into(),
        caret_slope_rise: 1,
        number_of_h_metrics: metrics.len() as u16,
        ..Default::default()
    };
    let maxp = Maxp::new(glyphs.len() as u16);
    let hmtx = Hmtx::new(metrics, Vec::new());
    let cmap = Cmap::from_mappings(letters.iter().enumerate().map(|(i, &c)| (c, GlyphId::new(i as u32 + 1))))
        .expect("unique mapping");

    let mut builder = FontBuilder::new();
    builder
        .add_table(&head)
        .and_then(|b| b.add_table(&hhea))
        .and_then(|b| b.add_table(&maxp))
        .and_then(|b| b.add_table(&hmtx))
        .and_then(|b| b.add_table(&cmap))
        .and_then(|b| b.add_table(&glyf))
        .and_then(|b| b.add_table(&loca))
        .expect("tables compile");
    builder.build()
}

/// Deterministic list of `count` font specs named `synth_00000`, ...
pub fn corpus_specs(count: usize, seed: u64) -> Vec<FontSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| FontSpec::new(format!("synth_{i:05}"), Style::sample(&mut rng)))
        .collect()
}

pub fn write_font(dir: &Path, spec: &FontSpec) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.ttf", spec.name));
    fs::write(&path, build_font(spec))?;
    Ok(path)
}

/// Writes `count` sampled fonts into `dir` and returns their paths.
pub fn write_corpus(dir: &Path, count: usize, seed: u64) -> io::Result<Vec<PathBuf>> {
    corpus_specs(count, seed).iter().map(|spec| write_font(dir, spec)).collect()
}
