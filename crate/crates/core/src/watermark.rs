//! Watermark placement: grid candidates over the scene, busyness scoring,
//! color selection, and alpha compositing of the question tile.

use image::imageops::{self, FilterType};
use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::color::{pick_color, rgb_to_hsv, Hsv, Rgb8, WatermarkColor};
use crate::composite::{BBox, CompositeArtifact, Method, RenderInfo};
use crate::error::{Error, Result};
use crate::manifest::SampleRecord;
use crate::raster::{render_text_tile, Font, MIN_TILE_SIDE};

pub const MIN_SCENE_SIDE: u32 = 64;

pub const GRADIENT_WEIGHT: f64 = 0.4;
pub const VARIANCE_WEIGHT: f64 = 0.4;
pub const CONTRAST_WEIGHT: f64 = 0.2;

const MICHELSON_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionCandidate {
    pub x0: u32,
    pub y0: u32,
    pub side_px: u32,
    /// Mean Sobel magnitude of the grayscale region.
    pub gradient: f64,
    /// Population variance of grayscale values.
    pub variance: f64,
    /// Michelson contrast `(max - min) / (max + min + eps)`.
    pub contrast: f64,
    /// Weighted sum of the per-image min-max normalized sub-scores.
    pub score: f64,
}

impl RegionCandidate {
    pub fn bbox(&self) -> BBox {
        BBox::new(self.x0, self.y0, self.x0 + self.side_px, self.y0 + self.side_px)
    }
}

/// Watermark side for a scene: a quarter of the short side.
pub fn region_side(width: u32, height: u32) -> u32 {
    width.min(height) / 4
}

/// Offsets `0, side, 2·side, …` plus a final offset clamped to
/// `len - side` when the grid leaves a remainder.
fn axis_offsets(len: u32, side: u32) -> Vec<u32> {
    let mut out: Vec<u32> = (0..).map(|i| i * side).take_while(|&p| p + side <= len).collect();
    if let Some(&last) = out.last() {
        if last + side < len {
            out.push(len - side);
        }
    }
    out
}

/// Luma per pixel, stored as `f32` to halve memory traffic on large scenes.
fn grayscale(scene: &RgbImage) -> Vec<f32> {
    scene
        .as_raw()
        .chunks_exact(3)
        .map(|p| (0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])) as f32)
        .collect()
}

/// Sobel gradient magnitude with edge replication.
fn sobel_magnitude(gray: &[f32], width: usize, height: usize) -> Vec<f32> {
    let mut out = vec![0.0; width * height];
    let col = |x: usize, d: isize| (x as isize + d).clamp(0, width as isize - 1) as usize;
    for y in 0..height {
        let up = &gray[y.saturating_sub(1) * width..][..width];
        let mid = &gray[y * width..][..width];
        let down = &gray[(y + 1).min(height - 1) * width..][..width];
        let dst = &mut out[y * width..][..width];
        let mut at = |x: usize, l: usize, r: usize| {
            let gx = (up[r] + 2.0 * mid[r] + down[r]) - (up[l] + 2.0 * mid[l] + down[l]);
            let gy = (down[l] + 2.0 * down[x] + down[r]) - (up[l] + 2.0 * up[x] + up[r]);
            dst[x] = (gx * gx + gy * gy).sqrt();
        };
        if width < 3 {
            for x in 0..width {
                at(x, col(x, -1), col(x, 1));
            }
            continue;
        }
        at(0, 0, 1);
        at(width - 1, width - 2, width - 1);
        let rows = up.windows(3).zip(mid.windows(3)).zip(down.windows(3));
        for (((u, m), d), dst) in rows.zip(&mut dst[1..width - 1]) {
            let gx = (u[2] + 2.0 * m[2] + d[2]) - (u[0] + 2.0 * m[0] + d[0]);
            let gy = (d[0] + 2.0 * d[1] + d[2]) - (u[0] + 2.0 * u[1] + u[2]);
            *dst = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

/// Min-max normalization; a constant column maps to all zeros.
fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span.is_nan() || span <= 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / span).collect()
}

/// Scores every grid region of the scene. Candidates come back in
/// row-major order.
pub fn enumerate_candidates(scene: &RgbImage) -> Result<Vec<RegionCandidate>> {
    let (w, h) = scene.dimensions();
    if w.min(h) < MIN_SCENE_SIDE {
        return Err(Error::invalid(format!("scene {w}x{h} is smaller than {MIN_SCENE_SIDE}px on a side")));
    }
    let side = region_side(w, h);
    let gray = grayscale(scene);
    let grad = sobel_magnitude(&gray, w as usize, h as usize);
    let n = f64::from(side) * f64::from(side);

    let mut out = Vec::new();
    for &y0 in &axis_offsets(h, side) {
        for &x0 in &axis_offsets(w, side) {
            let rows = || {
                (y0..y0 + side).map(|y| {
                    let start = y as usize * w as usize + x0 as usize;
                    start..start + side as usize
                })
            };
            // shifted by the first pixel so the variance keeps its precision
            let k = gray[rows().next().expect("side > 0").start];
            let (mut g_sum, mut s1, mut s2) = (0.0f64, 0.0f64, 0.0f64);
            let (mut lo, mut hi) = (k, k);
            for r in rows() {
                g_sum += grad[r.clone()].iter().map(|&g| f64::from(g)).sum::<f64>();
                for &v in &gray[r] {
                    let d = f64::from(v) - f64::from(k);
                    s1 += d;
                    s2 += d * d;
                    if v < lo {
                        lo = v;
                    }
                    if v > hi {
                        hi = v;
                    }
                }
            }
            let (lo, hi) = (f64::from(lo), f64::from(hi));
            out.push(RegionCandidate {
                x0,
                y0,
                side_px: side,
                gradient: g_sum / n,
                variance: ((s2 - s1 * s1 / n) / n).max(0.0),
                contrast: (hi - lo) / (hi + lo + MICHELSON_EPS),
                score: 0.0,
            });
        }
    }

    let norm = |f: fn(&RegionCandidate) -> f64| min_max(&out.iter().map(f).collect::<Vec<_>>());
    let (g, v, c) = (norm(|r| r.gradient), norm(|r| r.variance), norm(|r| r.contrast));
    for (i, cand) in out.iter_mut().enumerate() {
        cand.score = GRADIENT_WEIGHT * g[i] + VARIANCE_WEIGHT * v[i] + CONTRAST_WEIGHT * c[i];
    }
    Ok(out)
}

/// Scores closer than this to the minimum count as tied.
pub const SCORE_TIE_EPS: f64 = 1e-9;

/// The least busy candidate; ties (within [`SCORE_TIE_EPS`]) go to the
/// smallest `(y0, x0)`.
pub fn select_region(candidates: &[RegionCandidate]) -> Result<RegionCandidate> {
    let best = candidates
        .iter()
        .map(|c| c.score)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::invalid("no candidate regions"))?;
    Ok(*candidates
        .iter()
        .filter(|c| c.score <= best + SCORE_TIE_EPS)
        .min_by_key(|c| (c.y0, c.x0))
        .expect("the minimum is among the candidates"))
}

/// Mean color of a square region: circular mean hue, arithmetic mean
/// saturation and value, and the rounded mean RGB.
pub fn region_means(scene: &RgbImage, bbox: BBox) -> (Hsv, Rgb8) {
    let (mut sin, mut cos, mut s, mut v) = (0.0, 0.0, 0.0, 0.0);
    let mut rgb = [0.0f64; 3];
    for y in bbox.y0..bbox.y1 {
        for x in bbox.x0..bbox.x1 {
            let p = scene.get_pixel(x, y).0;
            let hsv = rgb_to_hsv(p);
            // achromatic pixels carry no hue
            if hsv.s > 0.0 {
                let rad = hsv.h.to_radians();
                sin += rad.sin();
                cos += rad.cos();
            }
            s += hsv.s;
            v += hsv.v;
            for (acc, ch) in rgb.iter_mut().zip(p) {
                *acc += f64::from(ch);
            }
        }
    }
    let n = f64::from(bbox.width()) * f64::from(bbox.height());
    let hue = if sin.abs() < 1e-9 && cos.abs() < 1e-9 {
        0.0
    } else {
        sin.atan2(cos).to_degrees().rem_euclid(360.0)
    };
    let mean_rgb = rgb.map(|c| (c / n).round() as u8);
    (Hsv::new(hue, s / n, v / n), mean_rgb)
}

/// Where and in which color the question goes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub region: RegionCandidate,
    pub color: WatermarkColor,
    pub region_mean_rgb: Rgb8,
}

pub fn place_watermark(scene: &RgbImage) -> Result<Placement> {
    let candidates = enumerate_candidates(scene)?;
    let region = select_region(&candidates)?;
    let (mean_hsv, mean_rgb) = region_means(scene, region.bbox());
    Ok(Placement { region, color: pick_color(mean_hsv, mean_rgb), region_mean_rgb: mean_rgb })
}

/// Renders the record's question as a watermark in the least busy region.
///
/// Regions narrower than the minimum tile side are rendered at that minimum
/// and downscaled into the region.
pub fn compose_watermark(scene: &RgbImage, record: &SampleRecord, font: &Font) -> Result<CompositeArtifact> {
    if record.excluded {
        return Err(Error::invalid(format!("record {:?} is excluded", record.id)));
    }
    let placement = place_watermark(scene)?;
    let side = placement.region.side_px;
    let fg = placement.color.rgb;
    // transparent pixels carry the text color so resampling only moves alpha
    let clear = [fg[0], fg[1], fg[2], 0];
    let tile = render_text_tile(&record.question, side.max(MIN_TILE_SIDE), fg, clear, font)?;
    let tile = if tile.side_px == side {
        tile.pixels
    } else {
        imageops::resize(&tile.pixels, side, side, FilterType::Triangle)
    };

    let bbox = placement.region.bbox();
    let mut pixels = scene.clone();
    for (tx, ty, p) in tile.enumerate_pixels() {
        let alpha = p[3];
        if alpha == 0 {
            continue;
        }
        let a = f64::from(alpha) / 255.0;
        let dst = pixels.get_pixel_mut(bbox.x0 + tx, bbox.y0 + ty);
        for ch in 0..3 {
            let blended = f64::from(fg[ch]) * a + f64::from(dst[ch]) * (1.0 - a);
            dst[ch] = blended.round().clamp(0.0, 255.0) as u8;
        }
    }

    let (width, height) = scene.dimensions();
    Ok(CompositeArtifact {
        pixels,
        info: RenderInfo {
            id: record.id.clone(),
            bbox,
            method: Method::Watermark,
            position: None,
            color: Some(fg),
            provenance: Some(placement.color.provenance),
            width,
            height,
        },
        color: Some(placement.color),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{DatasetKind, QuestionType};
    use image::Rgb;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record(q: &str) -> SampleRecord {
        SampleRecord {
            id: "w1".into(),
            scene_path: "s.png".into(),
            question: q.into(),
            answers: vec!["x".into()],
            dataset_kind: DatasetKind::Gqa,
            question_type: QuestionType::OpenEnded,
            choices: None,
            ocr_text: None,
            excluded: false,
        }
    }

    fn noise(w: u32, h: u32, seed: u64) -> RgbImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RgbImage::from_fn(w, h, |_, _| Rgb([rng.random(), rng.random(), rng.random()]))
    }

    #[test]
    fn grid_for_800x600() {
        let cands = enumerate_candidates(&RgbImage::new(800, 600)).unwrap();
        assert!(cands.iter().all(|c| c.side_px == 150));
        let xs: std::collections::BTreeSet<u32> = cands.iter().map(|c| c.x0).collect();
        let ys: std::collections::BTreeSet<u32> = cands.iter().map(|c| c.y0).collect();
        assert_eq!(xs.into_iter().collect::<Vec<_>>(), [0, 150, 300, 450, 600, 650]);
        assert_eq!(ys.into_iter().collect::<Vec<_>>(), [0, 150, 300, 450]);
        assert_eq!(cands.len(), 24);
    }

    #[test]
    fn uniform_scene_scores_zero() {
        let scene = RgbImage::from_pixel(300, 200, Rgb([128, 128, 128]));
        let cands = enumerate_candidates(&scene).unwrap();
        assert!(cands.iter().all(|c| c.score == 0.0));
        let best = select_region(&cands).unwrap();
        assert_eq!((best.x0, best.y0), (0, 0));
    }

    #[test]
    fn too_small_scene() {
        assert!(enumerate_candidates(&RgbImage::new(63, 500)).is_err());
        assert!(select_region(&[]).is_err());
    }

    #[test]
    fn argmin_and_tie_break() {
        let mk = |x0, y0, score| RegionCandidate {
            x0,
            y0,
            side_px: 10,
            gradient: 0.0,
            variance: 0.0,
            contrast: 0.0,
            score,
        };
        let c = [mk(0, 0, 0.3), mk(10, 0, 0.1), mk(20, 0, 0.5)];
        assert_eq!(select_region(&c).unwrap().x0, 10);
        let tied = [mk(10, 10, 0.2), mk(0, 10, 0.2), mk(10, 0, 0.2)];
        let best = select_region(&tied).unwrap();
        assert_eq!((best.x0, best.y0), (10, 0));
    }

    #[test]
    fn flat_quadrant_wins() {
        let mut scene = noise(256, 256, 7);
        for y in 0..128 {
            for x in 0..128 {
                scene.put_pixel(x, y, Rgb([90, 140, 200]));
            }
        }
        let best = select_region(&enumerate_candidates(&scene).unwrap()).unwrap();
        assert_eq!((best.x0, best.y0), (0, 0));
    }

    #[test]
    fn composite_keeps_size_and_locality() {
        let scene = noise(320, 240, 3);
        let art =
            compose_watermark(&scene, &record("What color is the hat?"), Font::dejavu_sans_bold()).unwrap();
        assert_eq!(art.pixels.dimensions(), scene.dimensions());
        assert_eq!(art.bbox().width(), 60);
        let mut changed = 0;
        for (x, y, p) in art.pixels.enumerate_pixels() {
            if p != scene.get_pixel(x, y) {
                assert!(art.bbox().contains(x, y));
                changed += 1;
            }
        }
        assert!(changed > 0);
    }

    #[test]
    fn small_scene_downscales_tile() {
        let scene = noise(64, 90, 5);
        let art = compose_watermark(&scene, &record("Why?"), Font::dejavu_sans_bold()).unwrap();
        assert_eq!(art.bbox().width(), 16);
        assert!(art.bbox().within(64, 90));
    }

    #[test]
    fn excluded_record_rejected() {
        let mut r = record("Q?");
        r.excluded = true;
        assert!(compose_watermark(&noise(64, 64, 1), &r, Font::dejavu_sans_bold()).is_err());
    }

    #[test]
    fn hue_mean_is_circular() {
        let mut scene = RgbImage::new(2, 1);
        // hues ~350 and ~10 average to ~0, not 180
        scene.put_pixel(0, 0, Rgb([255, 0, 43]));
        scene.put_pixel(1, 0, Rgb([255, 43, 0]));
        let (hsv, _) = region_means(&scene, BBox::new(0, 0, 2, 1));
        assert!(hsv.h < 1.0 || hsv.h > 359.0, "{}", hsv.h);
    }
}
