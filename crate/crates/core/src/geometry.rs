//! Projective geometry: homographies, their robust estimation and image warping.
//!
//! Estimation follows the normalized direct linear transform: both point sets
//! are translated to their centroid and scaled to a mean distance of √2 before
//! the 2n×9 system is solved, then the solution is denormalized. The robust
//! wrapper samples minimal 4-point sets, scores them by forward transfer error
//! and refits on the consensus set.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::Image;

/// Smallest |det| accepted for an invertible homography.
pub const MIN_DET: f64 = 1e-12;
/// Smallest homogeneous depth accepted when applying a homography.
pub const MIN_DEPTH: f64 = 1e-12;
/// Triangle-area threshold (normalized coordinates) for the collinearity test.
const COLLINEAR_AREA: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("too few correspondences: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("no model found: every minimal sample was degenerate")]
    NoModelFound,
    #[error("point maps to infinity")]
    PointAtInfinity,
    #[error("homography is not invertible")]
    NotInvertible,
    #[error("non-finite coordinate in input")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A 3×3 projective map between image planes, normalized so that
/// `m[2][2] = 1` whenever that entry is non-zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self(Matrix3::new(1.0, 0.0, dx, 0.0, 1.0, dy, 0.0, 0.0, 1.0))
    }

    /// Wraps a matrix after checking invertibility; the result is normalized.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let h = Self(normalize_scale(m));
        if h.0.determinant().abs() <= MIN_DET {
            return Err(GeometryError::NotInvertible);
        }
        Ok(h)
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        Self::from_matrix(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    pub fn from_row_major(v: [f64; 9]) -> Result<Self, GeometryError> {
        Self::from_matrix(Matrix3::from_row_slice(&v))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Entry at `(row, col)`.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let inv = self.0.try_inverse().ok_or(GeometryError::NotInvertible)?;
        Self::from_matrix(inv)
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Homography) -> Result<Self, GeometryError> {
        Self::from_matrix(self.0 * other.0)
    }

    /// Projective application of the map to a point.
    pub fn apply(&self, p: Point2) -> Result<Point2, GeometryError> {
        warp_point(self, p)
    }

    /// Maximum elementwise difference to another homography.
    pub fn max_abs_diff(&self, other: &Homography) -> f64 {
        (self.0 - other.0).abs().max()
    }
}

impl Serialize for Homography {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_row_major().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Homography {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = <[f64; 9]>::deserialize(d)?;
        Homography::from_row_major(v).map_err(serde::de::Error::custom)
    }
}

fn normalize_scale(m: Matrix3<f64>) -> Matrix3<f64> {
    let s = m[(2, 2)];
    if s != 0.0 {
        m / s
    } else {
        m
    }
}

/// Point pairs `src -> dst`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    pub pairs: Vec<(Point2, Point2)>,
}

impl CorrespondenceSet {
    pub fn new(pairs: Vec<(Point2, Point2)>) -> Result<Self, GeometryError> {
        if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn push(&mut self, src: Point2, dst: Point2) {
        self.pairs.push((src, dst));
    }

    fn subset(&self, idx: impl IntoIterator<Item = usize>) -> CorrespondenceSet {
        CorrespondenceSet {
            pairs: idx.into_iter().map(|i| self.pairs[i]).collect(),
        }
    }
}

/// Standard projective application.
pub fn warp_point(h: &Homography, p: Point2) -> Result<Point2, GeometryError> {
    let m = &h.0;
    let w = m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)];
    if w.abs() <= MIN_DEPTH {
        return Err(GeometryError::PointAtInfinity);
    }
    let x = (m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)]) / w;
    let y = (m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)]) / w;
    Ok(Point2::new(x, y))
}

/// Forward transfer error `|H(src) - dst|`; infinite when `src` maps to infinity.
pub fn transfer_error(h: &Homography, src: Point2, dst: Point2) -> f64 {
    match warp_point(h, src) {
        Ok(p) => p.distance(&dst),
        Err(_) => f64::INFINITY,
    }
}

/// Hartley normalization: returns the similarity `T` and the transformed points.
fn hartley(points: &[Point2]) -> (Matrix3<f64>, Vec<Point2>) {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = points.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    let s = if mean_dist > 0.0 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    let t = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    let pts = points
        .iter()
        .map(|p| Point2::new(s * (p.x - cx), s * (p.y - cy)))
        .collect();
    (t, pts)
}

fn triangle_area(a: Point2, b: Point2, c: Point2) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y)).abs()
}

fn check_minimal_sample(points: &[Point2], which: &str) -> Result<(), GeometryError> {
    debug_assert_eq!(points.len(), 4);
    for skip in 0..4 {
        let tri: Vec<Point2> = (0..4).filter(|&i| i != skip).map(|i| points[i]).collect();
        if triangle_area(tri[0], tri[1], tri[2]) < COLLINEAR_AREA {
            return Err(GeometryError::DegenerateConfiguration(format!(
                "three {which} points are collinear or coincide"
            )));
        }
    }
    Ok(())
}

/// Least-squares homography from at least four correspondences.
pub fn estimate_dlt(corr: &CorrespondenceSet) -> Result<Homography, GeometryError> {
    let n = corr.len();
    if n < 4 {
        return Err(GeometryError::TooFewPoints { needed: 4, got: n });
    }
    if corr.pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let src: Vec<Point2> = corr.pairs.iter().map(|p| p.0).collect();
    let dst: Vec<Point2> = corr.pairs.iter().map(|p| p.1).collect();
    let (t_src, src_n) = hartley(&src);
    let (t_dst, dst_n) = hartley(&dst);
    if n == 4 {
        check_minimal_sample(&src_n, "source")?;
        check_minimal_sample(&dst_n, "destination")?;
    }

    let mut a = DMatrix::<f64>::zeros(2 * n, 9);
    for (i, (s, d)) in src_n.iter().zip(&dst_n).enumerate() {
        let r = 2 * i;
        a[(r, 3)] = -s.x;
        a[(r, 4)] = -s.y;
        a[(r, 5)] = -1.0;
        a[(r, 6)] = d.y * s.x;
        a[(r, 7)] = d.y * s.y;
        a[(r, 8)] = d.y;
        a[(r + 1, 0)] = s.x;
        a[(r + 1, 1)] = s.y;
        a[(r + 1, 2)] = 1.0;
        a[(r + 1, 6)] = -d.x * s.x;
        a[(r + 1, 7)] = -d.x * s.y;
        a[(r + 1, 8)] = -d.x;
    }
    let ata = a.transpose() * &a;
    let eig = SymmetricEigen::new(ata);
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let largest = eig.eigenvalues[order[8]].abs().max(f64::MIN_POSITIVE);
    // A unique solution needs a one-dimensional null space.
    if eig.eigenvalues[order[1]].abs() / largest < 1e-14 {
        return Err(GeometryError::DegenerateConfiguration(
            "correspondences do not determine a unique homography".into(),
        ));
    }
    let v = eig.eigenvectors.column(order[0]);
    let h_n = Matrix3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]);
    let t_dst_inv = t_dst.try_inverse().ok_or(GeometryError::NotInvertible)?;
    let m = t_dst_inv * h_n * t_src;
    Homography::from_matrix(m).map_err(|e| match e {
        GeometryError::NotInvertible => GeometryError::DegenerateConfiguration("estimated map is singular".into()),
        other => other,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    /// Maximum transfer error (pixels) for a pair to count as an inlier.
    pub inlier_tol: f64,
    /// Probability of drawing at least one all-inlier sample.
    pub confidence: f64,
    pub max_iters: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            inlier_tol: 3.0,
            confidence: 0.995,
            max_iters: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub homography: Homography,
    pub inliers: Vec<bool>,
}

impl RansacResult {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

fn score(h: &Homography, corr: &CorrespondenceSet, tol: f64) -> (Vec<bool>, usize, f64) {
    let mut mask = Vec::with_capacity(corr.len());
    let mut count = 0;
    let mut err_sum = 0.0;
    for &(s, d) in &corr.pairs {
        let e = transfer_error(h, s, d);
        let inlier = e <= tol;
        if inlier {
            count += 1;
            err_sum += e * e;
        }
        mask.push(inlier);
    }
    (mask, count, err_sum)
}

fn required_iterations(inlier_ratio: f64, confidence: f64) -> usize {
    let w4 = inlier_ratio.powi(4);
    if w4 >= 1.0 - 1e-12 {
        return 1;
    }
    if w4 <= 0.0 {
        return usize::MAX;
    }
    let k = (1.0 - confidence).ln() / (1.0 - w4).ln();
    if k.is_finite() {
        k.ceil().max(1.0) as usize
    } else {
        usize::MAX
    }
}

/// Robust homography: minimal-sample consensus followed by a DLT refit on the
/// consensus set. Deterministic for a given `seed`.
pub fn estimate_ransac(corr: &CorrespondenceSet, cfg: &RansacConfig, seed: u64) -> Result<RansacResult, GeometryError> {
    let n = corr.len();
    if n < 4 {
        return Err(GeometryError::TooFewPoints { needed: 4, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Homography, usize, f64)> = None;
    let mut needed = cfg.max_iters;
    let mut iter = 0;
    while iter < needed.min(cfg.max_iters) {
        iter += 1;
        let idx = sample(&mut rng, n, 4);
        let Ok(h) = estimate_dlt(&corr.subset(idx.iter())) else {
            continue;
        };
        let (_, count, err) = score(&h, corr, cfg.inlier_tol);
        let better = match &best {
            None => true,
            Some((_, bc, be)) => count > *bc || (count == *bc && err < *be),
        };
        if better {
            best = Some((h, count, err));
            needed = required_iterations(count as f64 / n as f64, cfg.confidence);
        }
    }
    let (mut h, _, _) = best.ok_or(GeometryError::NoModelFound)?;
    let (mut mask, mut count, _) = score(&h, corr, cfg.inlier_tol);
    for _ in 0..5 {
        if count < 4 {
            break;
        }
        let inliers = corr.subset(mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i));
        let Ok(refit) = estimate_dlt(&inliers) else {
            break;
        };
        let (new_mask, new_count, _) = score(&refit, corr, cfg.inlier_tol);
        if new_count < count {
            break;
        }
        let stable = new_mask == mask;
        h = refit;
        mask = new_mask;
        count = new_count;
        if stable {
            break;
        }
    }
    Ok(RansacResult {
        homography: h,
        inliers: mask,
    })
}

/// Bilinear sample at a real-valued position; `None` outside the image.
#[inline]
pub fn sample_bilinear(img: &Image, x: f64, y: f64) -> Option<[f64; 3]> {
    const EPS: f64 = 1e-9;
    let (w, h) = img.dimensions();
    let (wf, hf) = ((w - 1) as f64, (h - 1) as f64);
    if !(x >= -EPS && y >= -EPS && x <= wf + EPS && y <= hf + EPS) {
        return None;
    }
    let x = x.clamp(0.0, wf);
    let y = y.clamp(0.0, hf);
    // non-negative after the clamp, so truncation is floor
    let x0 = x as u32;
    let y0 = y as u32;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let p00 = img.get_pixel(x0, y0).0;
    let p10 = img.get_pixel(x1, y0).0;
    let p01 = img.get_pixel(x0, y1).0;
    let p11 = img.get_pixel(x1, y1).0;
    let mut out = [0.0; 3];
    for c in 0..3 {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        out[c] = top * (1.0 - fy) + bottom * fy;
    }
    Some(out)
}

/// Inverse-mapped bilinear warp: output pixel `q` takes the input colour at
/// `h⁻¹(q)`. Destinations whose source falls outside the input stay black.
pub fn warp_image(h: &Homography, img: &Image, out_w: u32, out_h: u32) -> Result<Image, GeometryError> {
    let inv = h.inverse()?;
    let m = inv.matrix();
    let mut out = Image::new(out_w, out_h);
    for y in 0..out_h {
        let yf = y as f64;
        let bx = m[(0, 1)] * yf + m[(0, 2)];
        let by = m[(1, 1)] * yf + m[(1, 2)];
        let bw = m[(2, 1)] * yf + m[(2, 2)];
        for x in 0..out_w {
            let xf = x as f64;
            let w = m[(2, 0)] * xf + bw;
            if w.abs() <= MIN_DEPTH {
                continue;
            }
            let sx = (m[(0, 0)] * xf + bx) / w;
            let sy = (m[(1, 0)] * xf + by) / w;
            if let Some(rgb) = sample_bilinear(img, sx, sy) {
                out.put_pixel(
                    x,
                    y,
                    ::image::Rgb([(rgb[0] + 0.5) as u8, (rgb[1] + 0.5) as u8, (rgb[2] + 0.5) as u8]),
                );
            }
        }
    }
    Ok(out)
}

/// Which output pixels receive content when warping a `src_w × src_h` image by `h`.
pub fn warp_coverage(
    h: &Homography,
    src_w: u32,
    src_h: u32,
    out_w: u32,
    out_h: u32,
) -> Result<Vec<bool>, GeometryError> {
    let inv = h.inverse()?;
    let mut mask = Vec::with_capacity((out_w * out_h) as usize);
    let (wf, hf) = ((src_w - 1) as f64, (src_h - 1) as f64);
    for y in 0..out_h {
        for x in 0..out_w {
            let inside = match warp_point(&inv, Point2::new(x as f64, y as f64)) {
                Ok(p) => p.x >= -1e-9 && p.y >= -1e-9 && p.x <= wf + 1e-9 && p.y <= hf + 1e-9,
                Err(_) => false,
            };
            mask.push(inside);
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn square() -> Vec<Point2> {
        vec![
            Point2::new(0.0, 0.0),
            Point2::new(100.0, 0.0),
            Point2::new(100.0, 80.0),
            Point2::new(0.0, 80.0),
        ]
    }

    fn map_all(h: &Homography, pts: &[Point2]) -> CorrespondenceSet {
        CorrespondenceSet::new(pts.iter().map(|&p| (p, warp_point(h, p).unwrap())).collect()).unwrap()
    }

    #[test]
    fn dlt_identity_and_translation() {
        let pts = square();
        let h = estimate_dlt(&map_all(&Homography::identity(), &pts)).unwrap();
        assert!(h.max_abs_diff(&Homography::identity()) < 1e-9);

        let h = estimate_dlt(&map_all(&Homography::translation(5.0, 3.0), &pts)).unwrap();
        assert!((h.at(0, 2) - 5.0).abs() < 1e-9);
        assert!((h.at(1, 2) - 3.0).abs() < 1e-9);
        assert!(h.max_abs_diff(&Homography::translation(5.0, 3.0)) < 1e-9);
    }

    #[test]
    fn dlt_error_paths() {
        let three = CorrespondenceSet::new(square()[..3].iter().map(|&p| (p, p)).collect()).unwrap();
        assert_eq!(
            estimate_dlt(&three),
            Err(GeometryError::TooFewPoints { needed: 4, got: 3 })
        );
        let collinear: Vec<Point2> = vec![
            Point2::new(0.0, 0.0),
            Point2::new(10.0, 10.0),
            Point2::new(20.0, 20.0),
            Point2::new(5.0, 40.0),
        ];
        let c = CorrespondenceSet::new(collinear.iter().map(|&p| (p, p)).collect()).unwrap();
        assert!(matches!(
            estimate_dlt(&c),
            Err(GeometryError::DegenerateConfiguration(_))
        ));
        let dup = [square()[0], square()[0], square()[1], square()[2]];
        let c = CorrespondenceSet::new(dup.iter().map(|&p| (p, p)).collect()).unwrap();
        assert!(matches!(
            estimate_dlt(&c),
            Err(GeometryError::DegenerateConfiguration(_))
        ));
        let line: Vec<Point2> = (0..10).map(|i| Point2::new(i as f64, 2.0 * i as f64)).collect();
        let c = CorrespondenceSet::new(line.iter().map(|&p| (p, p)).collect()).unwrap();
        assert!(matches!(
            estimate_dlt(&c),
            Err(GeometryError::DegenerateConfiguration(_))
        ));
        assert_eq!(
            CorrespondenceSet::new(vec![(Point2::new(f64::NAN, 0.0), Point2::default())]),
            Err(GeometryError::NonFinite)
        );
    }

    #[test]
    fn ransac_matches_dlt_on_clean_data() {
        let pts: Vec<Point2> = (0..12)
            .map(|i| Point2::new((i % 4) as f64 * 50.0, (i / 4) as f64 * 40.0 + (i % 3) as f64))
            .collect();
        let corr = map_all(&Homography::translation(7.0, -2.0), &pts);
        let r = estimate_ransac(&corr, &RansacConfig::default(), 1).unwrap();
        let d = estimate_dlt(&corr).unwrap();
        assert!(r.inliers.iter().all(|&b| b));
        assert!(r.homography.max_abs_diff(&d) < 1e-9);
    }

    #[test]
    fn ransac_degenerate_minimal_set() {
        let pts = [
            Point2::new(0.0, 0.0),
            Point2::new(10.0, 0.0),
            Point2::new(20.0, 0.0),
            Point2::new(5.0, 30.0),
        ];
        let c = CorrespondenceSet::new(pts.iter().map(|&p| (p, p)).collect()).unwrap();
        assert_eq!(
            estimate_ransac(&c, &RansacConfig::default(), 0),
            Err(GeometryError::NoModelFound)
        );
    }

    #[test]
    fn warp_point_cases() {
        let p = warp_point(&Homography::identity(), Point2::new(10.0, 20.0)).unwrap();
        assert_eq!(p, Point2::new(10.0, 20.0));
        let p = warp_point(&Homography::translation(5.0, 3.0), Point2::new(0.0, 0.0)).unwrap();
        assert_eq!(p, Point2::new(5.0, 3.0));
        let h = Homography::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]]).unwrap();
        assert_eq!(
            warp_point(&h, Point2::new(-1.0, 5.0)),
            Err(GeometryError::PointAtInfinity)
        );
    }

    fn textured(w: u32, h: u32) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        Image::from_fn(w, h, |_, _| ::image::Rgb([rng.gen(), rng.gen(), rng.gen()]))
    }

    #[test]
    fn warp_identity_is_exact() {
        let img = textured(40, 30);
        let out = warp_image(&Homography::identity(), &img, 40, 30).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn warp_translation_shifts_columns() {
        let img = textured(40, 30);
        let out = warp_image(&Homography::translation(5.0, 0.0), &img, 40, 30).unwrap();
        for y in 0..30 {
            for x in 0..40 {
                let expected = if x < 5 { [0, 0, 0] } else { img.get_pixel(x - 5, y).0 };
                assert_eq!(out.get_pixel(x, y).0, expected, "({x},{y})");
            }
        }
    }

    #[test]
    fn homography_serde_is_row_major() {
        let h = Homography::translation(5.0, 3.0);
        let s = serde_json::to_string(&h).unwrap();
        assert_eq!(s, "[1.0,0.0,5.0,0.0,1.0,3.0,0.0,0.0,1.0]");
        let back: Homography = serde_json::from_str(&s).unwrap();
        assert_eq!(back, h);
    }
}
