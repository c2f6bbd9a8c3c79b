//! Feature-space PCA of stream outputs and Grad-CAM contribution maps.
//!
//! PCA is fit on the combined vectors of both characters of a comparison,
//! so the two point clouds share one 2-D basis. Grad-CAM weights each
//! channel of the last conv block's (post-pool) map by the spatial mean of
//! the target logit's gradient, sums, and applies ReLU.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{image_to_input, ModelCheckpoint, Network, Real};
use crate::pairgen::SAME;
use crate::raster::{write_png, Dataset, GlyphImage};

/// Minimum number of fonts for a PCA comparison.
pub const MIN_PCA_FONTS: usize = 3;

/// Principal axes of a point set, largest variance first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaFit {
    pub mean: Vec<f64>,
    /// `k` unit vectors; the largest-magnitude coefficient of each is positive.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    /// Full nonnegative covariance spectrum, descending.
    pub eigenvalues: Vec<f64>,
}

impl PcaFit {
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.iter().zip(x).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum()).collect()
    }

    /// Maps component coordinates back to the input space.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &t) in self.components.iter().zip(coords) {
            for (o, v) in out.iter_mut().zip(c) {
                *o += t * v;
            }
        }
        out
    }
}

fn orient(v: &mut [f64]) {
    let pivot = v.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Completes `basis` with unit vectors orthogonal to it (Gram-Schmidt over
/// the standard basis), used when the data has fewer than `k` directions.
fn complete_basis(basis: &mut Vec<Vec<f64>>, d: usize, k: usize) {
    for e in 0..d {
        if basis.len() >= k {
            break;
        }
        let mut v = vec![0.0; d];
        v[e] = 1.0;
        for b in basis.iter() {
            let dot: f64 = b.iter().zip(&v).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
}

/// Covariance-eigendecomposition PCA (normalization `n - 1`). For more
/// dimensions than samples the equivalent Gram-matrix route is used.
pub fn fit_pca(data: &[Vec<f64>], k: usize) -> Result<PcaFit> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("PCA needs at least 2 vectors, got {n}")));
    }
    let d = data[0].len();
    if d == 0 || data.iter().any(|x| x.len() != d) {
        return Err(Error::ShapeMismatch("PCA vectors must share one nonzero length".into()));
    }
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!("cannot keep {k} components of {d}-dim data")));
    }
    let mut mean = vec![0.0; d];
    for x in data {
        mean.iter_mut().zip(x).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let x = DMatrix::from_fn(n, d, |i, j| data[i][j] - mean[j]);
    let scale = 1.0 / (n - 1) as f64;

    let (eigenvalues, mut components) = if d <= n {
        let eig = SymmetricEigen::new(x.tr_mul(&x) * scale);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let comps = order.iter().take(k).map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect();
        (values, comps)
    } else {
        let eig = SymmetricEigen::new(&x * x.transpose() * scale);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let floor = values[0] * 1e-12;
        let mut comps: Vec<Vec<f64>> = Vec::with_capacity(k);
        for &i in order.iter().take(k) {
            let lambda = eig.eigenvalues[i];
            if lambda <= floor || lambda <= 0.0 {
                break;
            }
            let v = x.tr_mul(&eig.eigenvectors.column(i).into_owned());
            let norm = v.norm();
            comps.push(v.iter().map(|e| e / norm).collect());
        }
        (values, comps)
    };
    complete_basis(&mut components, d, k);
    components.iter_mut().for_each(|c| orient(c));
    let mut eigenvalues = eigenvalues;
    eigenvalues.resize(d.min(eigenvalues.len().max(k)), 0.0);
    let explained_variance = eigenvalues[..k].to_vec();
    Ok(PcaFit { mean, components, explained_variance, eigenvalues })
}

/// Balanced leave-one-out nearest-centroid accuracy between two 2-D point
/// clouds, remapped so that 1 means indistinguishable and 0 separable.
/// Equidistant points count as misclassified.
pub fn overlap_score(points_a: &[[f64; 2]], points_b: &[[f64; 2]]) -> Result<f64> {
    if points_a.len() < 2 || points_b.len() < 2 {
        return Err(Error::InvalidArgument("overlap needs at least 2 points per class".into()));
    }
    let sum = |pts: &[[f64; 2]]| pts.iter().fold([0.0, 0.0], |s, p| [s[0] + p[0], s[1] + p[1]]);
    let dist2 = |p: &[f64; 2], c: &[f64; 2]| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
    let class_acc = |own: &[[f64; 2]], other: &[[f64; 2]]| {
        let own_sum = sum(own);
        let other_sum = sum(other);
        let m = own.len() as f64 - 1.0;
        let other_c = [other_sum[0] / other.len() as f64, other_sum[1] / other.len() as f64];
        let correct = own
            .iter()
            .filter(|p| {
                let own_c = [(own_sum[0] - p[0]) / m, (own_sum[1] - p[1]) / m];
                dist2(p, &own_c) < dist2(p, &other_c)
            })
            .count();
        correct as f64 / own.len() as f64
    };
    let balanced = 0.5 * (class_acc(points_a, points_b) + class_acc(points_b, points_a));
    Ok((2.0 * (1.0 - balanced)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub char_a: char,
    pub char_b: char,
    pub fonts: Vec<String>,
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub points_a: Vec<[f64; 2]>,
    pub points_b: Vec<[f64; 2]>,
    pub overlap_score: f64,
}

/// PCA comparison from precomputed stream vectors (one per font and letter).
pub fn pca_from_features(
    char_a: char,
    char_b: char,
    fonts: Vec<String>,
    features_a: &[Vec<f64>],
    features_b: &[Vec<f64>],
) -> Result<PcaProjection> {
    if char_a == char_b {
        return Err(Error::IdenticalCharacters(char_a));
    }
    if fonts.len() < MIN_PCA_FONTS {
        return Err(Error::TooFewFonts { k: MIN_PCA_FONTS, fonts: fonts.len() });
    }
    if features_a.len() != fonts.len() || features_b.len() != fonts.len() {
        return Err(Error::ShapeMismatch("one feature vector per font and character expected".into()));
    }
    let all: Vec<Vec<f64>> = features_a.iter().chain(features_b).cloned().collect();
    let fit = fit_pca(&all, 2)?;
    let to2 = |v: &Vec<f64>| {
        let p = fit.project(v);
        [p[0], p[1]]
    };
    let points_a: Vec<[f64; 2]> = features_a.iter().map(to2).collect();
    let points_b: Vec<[f64; 2]> = features_b.iter().map(to2).collect();
    let overlap_score = overlap_score(&points_a, &points_b)?;
    Ok(PcaProjection {
        char_a,
        char_b,
        fonts,
        components: fit.components,
        explained_variance: fit.explained_variance,
        points_a,
        points_b,
        overlap_score,
    })
}

/// Flattened evaluation-mode stream output for each font's glyph of `c`.
pub fn stream_vectors(net: &Network<f32>, ds: &Dataset, fonts: &[String], c: char) -> Result<Vec<Vec<f64>>> {
    fonts
        .iter()
        .map(|id| {
            let entry =
                ds.entry(id).ok_or_else(|| Error::InvalidArgument(format!("font {id} is not in the dataset")))?;
            let path = ds.glyph_path(entry, c).ok_or_else(|| Error::MissingGlyphFile {
                path: ds.root.join(id).join(format!("{c}.png")),
            })?;
            let img = GlyphImage::read_png(&path, c, id)?;
            let feats = net.stream_forward(&image_to_input::<f32>(&img.pixels), false, 0)?;
            Ok(feats.output.iter().map(|&v| f64::from(v)).collect())
        })
        .collect()
}

pub fn pca_project(
    ckpt: &ModelCheckpoint,
    ds: &Dataset,
    fonts: &[String],
    char_a: char,
    char_b: char,
) -> Result<PcaProjection> {
    if char_a == char_b {
        return Err(Error::IdenticalCharacters(char_a));
    }
    if fonts.len() < MIN_PCA_FONTS {
        return Err(Error::TooFewFonts { k: MIN_PCA_FONTS, fonts: fonts.len() });
    }
    let net = ckpt.network()?;
    let fa = stream_vectors(&net, ds, fonts, char_a)?;
    let fb = stream_vectors(&net, ds, fonts, char_b)?;
    pca_from_features(char_a, char_b, fonts.to_vec(), &fa, &fb)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Upsampling {
    #[default]
    Bilinear,
    Nearest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionMap {
    pub slot: Slot,
    pub target_class: u8,
    /// Per-channel weights (spatial mean of the target-logit gradient).
    pub alphas: Vec<f64>,
    pub raw_height: usize,
    pub raw_width: usize,
    /// `ReLU(sum_k alpha_k A_k)`, row-major.
    pub raw: Vec<f64>,
    pub size: usize,
    /// Upsampled to the input size, divided by its max when nonzero.
    pub upsampled: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCam {
    pub p_same: f64,
    pub predicted: u8,
    pub target_class: u8,
    pub maps: [ContributionMap; 2],
}

/// Channel weights and the rectified weighted sum for one `(C, H, W)` map.
pub fn grad_cam_from_grads(
    activations: &[f64],
    grads: &[f64],
    shape: (usize, usize, usize),
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (c, h, w) = shape;
    if activations.len() != c * h * w || grads.len() != c * h * w {
        return Err(Error::ShapeMismatch(format!("activation/gradient length does not match {c}x{h}x{w}")));
    }
    let hw = h * w;
    let alphas: Vec<f64> = grads.chunks(hw).map(|g| g.iter().sum::<f64>() / hw as f64).collect();
    let mut raw = vec![0.0; hw];
    for (alpha, a) in alphas.iter().zip(activations.chunks(hw)) {
        raw.iter_mut().zip(a).for_each(|(r, v)| *r += alpha * v);
    }
    raw.iter_mut().for_each(|r| *r = r.max(0.0));
    Ok((alphas, raw))
}

/// Resizes a map to `size x size` (half-pixel-centered sampling).
pub fn upsample(map: &[f64], h: usize, w: usize, size: usize, mode: Upsampling) -> Vec<f64> {
    let mut out = vec![0.0; size * size];
    let (sy, sx) = (h as f64 / size as f64, w as f64 / size as f64);
    for y in 0..size {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        for x in 0..size {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            out[y * size + x] = match mode {
                Upsampling::Nearest => {
                    let (iy, ix) = (((y * h) / size).min(h - 1), ((x * w) / size).min(w - 1));
                    map[iy * w + ix]
                }
                Upsampling::Bilinear => {
                    let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
                    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
                    let (ty, tx) = (fy - y0 as f64, fx - x0 as f64);
                    let top = map[y0 * w + x0] * (1.0 - tx) + map[y0 * w + x1] * tx;
                    let bottom = map[y1 * w + x0] * (1.0 - tx) + map[y1 * w + x1] * tx;
                    top * (1.0 - ty) + bottom * ty
                }
            };
        }
    }
    out
}

fn normalize_max(v: &mut [f64]) {
    let max = v.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        v.iter_mut().for_each(|x| *x = (*x / max).max(0.0));
    }
}

/// Grad-CAM for both slots of one pair in evaluation mode. `target` defaults
/// to the predicted class.
pub fn grad_cam<T: Real>(
    net: &Network<T>,
    a: &[T],
    b: &[T],
    target: Option<u8>,
    mode: Upsampling,
) -> Result<GradCam> {
    let fa = net.stream_forward(a, false, 0)?;
    let fb = net.stream_forward(b, false, 0)?;
    let head = net.head_logits(&fa.output, &fb.output)?;
    let p_same = head.probs[1].to_f64().unwrap_or(f64::NAN);
    let predicted = crate::evaluator::predicted_label(p_same);
    let target_class = target.unwrap_or(predicted);
    if target_class > 1 {
        return Err(Error::InvalidArgument(format!("target class must be 0 or 1, got {target_class}")));
    }
    let mut onehot = [T::zero(); 2];
    onehot[target_class as usize] = T::one();
    let (ga, gb) = net.head_input_gradient(&fa.output, &fb.output, onehot)?;
    let size = net.config().input_size;
    let make = |slot: Slot, feats: &crate::netmodel::StreamFeatures<T>, grads: &[T]| -> Result<ContributionMap> {
        let (c, h, w) = feats.last_conv.shape;
        let acts: Vec<f64> = feats.last_conv.data.iter().map(|v| v.to_f64().unwrap_or(0.0)).collect();
        let grads: Vec<f64> = grads.iter().map(|v| v.to_f64().unwrap_or(0.0)).collect();
        let (alphas, raw) = grad_cam_from_grads(&acts, &grads, (c, h, w))?;
        let mut upsampled = upsample(&raw, h, w, size, mode);
        normalize_max(&mut upsampled);
        Ok(ContributionMap { slot, target_class, alphas, raw_height: h, raw_width: w, raw, size, upsampled })
    };
    Ok(GradCam { p_same, predicted, target_class, maps: [make(Slot::A, &fa, &ga)?, make(Slot::B, &fb, &gb)?] })
}

/// "Jet" color ramp for `v` in `[0, 1]`.
pub fn jet(v: f64) -> [f64; 3] {
    let v = v.clamp(0.0, 1.0);
    let channel = |offset: f64| (1.5 - (4.0 * v - offset).abs()).clamp(0.0, 1.0);
    [channel(3.0), channel(2.0), channel(1.0)]
}

/// The glyph (black on white) blended 50/50 with the color-mapped map.
pub fn composite_heatmap(map: &ContributionMap, base: &GlyphImage) -> Result<Vec<u8>> {
    if base.size != map.size || base.pixels.len() != map.upsampled.len() {
        return Err(Error::ShapeMismatch(format!("map is {0}x{0}, glyph is {1}x{1}", map.size, base.size)));
    }
    let mut rgb = Vec::with_capacity(map.upsampled.len() * 3);
    for (&v, &px) in map.upsampled.iter().zip(&base.pixels) {
        let gray = if px == 1 { 0.0 } else { 255.0 };
        for c in jet(v) {
            rgb.push((0.5 * gray + 0.5 * 255.0 * c).round() as u8);
        }
    }
    Ok(rgb)
}

pub fn render_heatmap(map: &ContributionMap, base: &GlyphImage, path: &Path) -> Result<()> {
    let rgb = composite_heatmap(map, base)?;
    write_png(path, base.size as u32, base.size as u32, png::ColorType::Rgb, &rgb)
}

/// One row of `pca_points.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub font_id: String,
    pub char_class: char,
    pub pc1: f64,
    pub pc2: f64,
}

pub fn scatter_points(proj: &PcaProjection) -> Vec<ScatterPoint> {
    let side = |c: char, pts: &[[f64; 2]]| {
        proj.fonts
            .iter()
            .zip(pts)
            .map(|(f, p)| ScatterPoint { font_id: f.clone(), char_class: c, pc1: p[0], pc2: p[1] })
            .collect::<Vec<_>>()
    };
    let mut out = side(proj.char_a, &proj.points_a);
    out.extend(side(proj.char_b, &proj.points_b));
    out
}

const SCATTER_SIZE: usize = 480;
const SCATTER_PAD: usize = 24;
const COLOR_A: [u8; 3] = [214, 39, 40];
const COLOR_B: [u8; 3] = [31, 119, 180];

/// Rasterizes points into an RGB canvas: first character red, second blue,
/// gray axes through the origin.
pub fn scatter_canvas(points: &[ScatterPoint]) -> Vec<u8> {
    let n = SCATTER_SIZE;
    let mut img = vec![255u8; n * n * 3];
    let mut put = |x: i64, y: i64, color: [u8; 3]| {
        if (0..n as i64).contains(&x) && (0..n as i64).contains(&y) {
            let i = (y as usize * n + x as usize) * 3;
            img[i..i + 3].copy_from_slice(&color);
        }
    };
    let extent = points.iter().flat_map(|p| [p.pc1.abs(), p.pc2.abs()]).fold(0.0f64, f64::max).max(1e-12);
    let span = (n - 2 * SCATTER_PAD) as f64 / 2.0;
    let to_px = |v: f64| (n as f64 / 2.0 + v / extent * span).round() as i64;
    for i in 0..n as i64 {
        put(i, n as i64 / 2, [200, 200, 200]);
        put(n as i64 / 2, i, [200, 200, 200]);
    }
    let first = points.first().map(|p| p.char_class);
    for p in points {
        let color = if Some(p.char_class) == first { COLOR_A } else { COLOR_B };
        let (cx, cy) = (to_px(p.pc1), to_px(-p.pc2));
        for dy in -2..=2 {
            for dx in -2..=2 {
                put(cx + dx, cy + dy, color);
            }
        }
    }
    img
}

pub fn write_scatter_csv(path: &Path, points: &[ScatterPoint]) -> Result<()> {
    let mut s = String::from("font_id,char,pc1,pc2\n");
    for p in points {
        writeln!(s, "{},{},{},{}", p.font_id, p.char_class, p.pc1, p.pc2).unwrap();
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_scatter_csv(path: &Path) -> Result<Vec<ScatterPoint>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize| Error::format(format!("{}:{line}", path.display()), "expected font_id,char,pc1,pc2");
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            // Font ids may contain commas; the last three fields never do.
            let mut parts = line.rsplitn(4, ',');
            let pc2 = parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad(i + 1))?;
            let pc1 = parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad(i + 1))?;
            let char_class = parts.next().and_then(|v| v.chars().next()).ok_or_else(|| bad(i + 1))?;
            let font_id = parts.next().ok_or_else(|| bad(i + 1))?.to_string();
            Ok(ScatterPoint { font_id, char_class, pc1, pc2 })
        })
        .collect()
}

/// Writes the scatter PNG and its coordinate CSV.
pub fn render_scatter(proj: &PcaProjection, png_path: &Path, csv_path: &Path) -> Result<()> {
    let points = scatter_points(proj);
    write_scatter_csv(csv_path, &points)?;
    let canvas = scatter_canvas(&points);
    write_png(png_path, SCATTER_SIZE as u32, SCATTER_SIZE as u32, png::ColorType::Rgb, &canvas)
}

/// Human-readable target name.
pub fn class_name(label: u8) -> &'static str {
    if label == SAME {
        "same"
    } else {
        "different"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vectors(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
    }

    #[test]
    fn pca_routes_agree() {
        // Zero-padding the same data forces the Gram route (d > n); the
        // spectrum head and the components must not change.
        let narrow = random_vectors(10, 5, 1);
        let a = fit_pca(&narrow, 2).unwrap();
        let padded: Vec<Vec<f64>> = narrow.iter().map(|v| [v.clone(), vec![0.0; 20]].concat()).collect();
        let b = fit_pca(&padded, 2).unwrap();
        for i in 0..2 {
            assert!((a.explained_variance[i] - b.explained_variance[i]).abs() < 1e-9);
            for j in 0..5 {
                assert!((a.components[i][j] - b.components[i][j]).abs() < 1e-9);
            }
        }
        let dot: f64 = b.components[0].iter().zip(&b.components[1]).map(|(x, y)| x * y).sum();
        assert!(dot.abs() < 1e-9);
    }

    #[test]
    fn sign_convention_holds() {
        let fit = fit_pca(&random_vectors(20, 6, 2), 2).unwrap();
        for c in &fit.components {
            let pivot = c.iter().copied().fold(0.0f64, |b, x| if x.abs() > b.abs() { x } else { b });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn rank_deficient_data_still_gets_orthonormal_basis() {
        let data = vec![vec![1.0, 0.0, 0.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0, 0.0, 0.0]];
        let fit = fit_pca(&data, 2).unwrap();
        let dot: f64 = fit.components[0].iter().zip(&fit.components[1]).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-12);
        assert_eq!(fit.explained_variance[1], 0.0);
    }

    #[test]
    fn overlap_extremes() {
        let a: Vec<[f64; 2]> = (0..10).map(|i| [i as f64 * 0.1, (i * 7 % 10) as f64 * 0.1]).collect();
        assert_eq!(overlap_score(&a, &a).unwrap(), 1.0);
        let b: Vec<[f64; 2]> = a.iter().map(|p| [p[0] + 100.0, p[1]]).collect();
        assert_eq!(overlap_score(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn grad_cam_raw_is_rectified_weighted_sum() {
        let acts = [1.0, 2.0, 3.0, 4.0, 0.5, 0.5, 0.5, 0.5];
        let grads = [1.0, 1.0, 1.0, 1.0, -4.0, -4.0, -4.0, -4.0];
        let (alphas, raw) = grad_cam_from_grads(&acts, &grads, (2, 2, 2)).unwrap();
        assert_eq!(alphas, vec![1.0, -4.0]);
        assert_eq!(raw, vec![0.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn upsampling_preserves_constants_and_range() {
        let m = upsample(&[0.3; 4], 2, 2, 7, Upsampling::Bilinear);
        assert!(m.iter().all(|&v| (v - 0.3).abs() < 1e-12));
        let m = upsample(&[0.0, 1.0, 2.0, 3.0], 2, 2, 10, Upsampling::Bilinear);
        assert_eq!(m[0], 0.0);
        assert_eq!(m[99], 3.0);
        let n = upsample(&[0.0, 1.0, 2.0, 3.0], 2, 2, 4, Upsampling::Nearest);
        assert_eq!(n, vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 2.0, 2.0, 3.0, 3.0]);
    }

    fn flat_map(v: f64, size: usize) -> ContributionMap {
        ContributionMap {
            slot: Slot::A,
            target_class: 1,
            alphas: vec![],
            raw_height: 1,
            raw_width: 1,
            raw: vec![v],
            size,
            upsampled: vec![v; size * size],
        }
    }

    #[test]
    fn heatmap_composite_and_round_trip() {
        let base = GlyphImage { size: 4, pixels: vec![1, 0, 0, 1, 0, 1, 1, 0, 0, 0, 0, 0, 1, 1, 1, 1], char_class: 'A', font_id: "f".into() };
        let zero = composite_heatmap(&flat_map(0.0, 4), &base).unwrap();
        // jet(0) = (0, 0, 0.5): white -> (128, 128, 191), black -> (0, 0, 64)
        assert_eq!(&zero[..3], &[0, 0, 64]);
        assert_eq!(&zero[3..6], &[128, 128, 191]);
        let full = composite_heatmap(&flat_map(1.0, 4), &base).unwrap();
        assert_eq!(&full[3..6], &[191, 128, 128]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.png");
        render_heatmap(&flat_map(0.6, 4), &base, &path).unwrap();
        let (w, h, ch, data) = crate::raster::read_png(&path).unwrap();
        assert_eq!((w, h, ch), (4, 4, 3));
        assert_eq!(data, composite_heatmap(&flat_map(0.6, 4), &base).unwrap());
    }

    #[test]
    fn scatter_csv_round_trip() {
        let proj = PcaProjection {
            char_a: 'D',
            char_b: 'E',
            fonts: vec!["x,y".into(), "b".into(), "c".into()],
            components: vec![],
            explained_variance: vec![],
            points_a: vec![[0.0, 1.0], [1.5, -2.0], [3.0, 0.25]],
            points_b: vec![[-1.0, 1.0], [0.1, 0.2], [1e-9, 7.0]],
            overlap_score: 0.0,
        };
        let dir = tempfile::tempdir().unwrap();
        let (png_path, csv) = (dir.path().join("s.png"), dir.path().join("p.csv"));
        render_scatter(&proj, &png_path, &csv).unwrap();
        let back = read_scatter_csv(&csv).unwrap();
        assert_eq!(back.len(), 6);
        assert_eq!(back, scatter_points(&proj));
        let (_, _, _, data) = crate::raster::read_png(&png_path).unwrap();
        assert_eq!(data, scatter_canvas(&back));
    }
}
