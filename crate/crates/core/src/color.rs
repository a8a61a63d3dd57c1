//! HSV conversion, WCAG contrast, and the watermark color rule.

use serde::{Deserialize, Serialize};

pub type Rgb8 = [u8; 3];

pub const BLACK: Rgb8 = [0, 0, 0];
pub const WHITE: Rgb8 = [255, 255, 255];

/// Minimum contrast ratio a computed watermark color must exceed.
pub const MIN_CONTRAST: f64 = 4.5;

/// Hue in degrees `[0, 360)`, saturation and value on the 8-bit `[0, 255]`
/// scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hsv {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

impl Hsv {
    pub fn new(h: f64, s: f64, v: f64) -> Self {
        Hsv { h, s, v }
    }
}

pub fn rgb_to_hsv(rgb: Rgb8) -> Hsv {
    let [r, g, b] = rgb.map(f64::from);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { 255.0 * delta / max };
    Hsv { h: h.rem_euclid(360.0), s, v: max }
}

pub fn hsv_to_rgb(hsv: Hsv) -> Rgb8 {
    let h = hsv.h.rem_euclid(360.0);
    let s = (hsv.s / 255.0).clamp(0.0, 1.0);
    let v = (hsv.v / 255.0).clamp(0.0, 1.0);
    let c = v * s;
    let x = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match (h / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r, g, b].map(|ch| ((ch + m) * 255.0).round().clamp(0.0, 255.0) as u8)
}

fn linearize(channel: u8) -> f64 {
    let c = f64::from(channel) / 255.0;
    if c <= 0.03928 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// WCAG relative luminance in `[0, 1]`.
pub fn relative_luminance(rgb: Rgb8) -> f64 {
    let [r, g, b] = rgb.map(linearize);
    0.2126 * r + 0.7152 * g + 0.0722 * b
}

/// WCAG contrast ratio, symmetric, in `[1, 21]`.
pub fn wcag_contrast(a: Rgb8, b: Rgb8) -> f64 {
    let (la, lb) = (relative_luminance(a), relative_luminance(b));
    let (hi, lo) = if la >= lb { (la, lb) } else { (lb, la) };
    (hi + 0.05) / (lo + 0.05)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorProvenance {
    Computed,
    BlackFallback,
    WhiteFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WatermarkColor {
    pub rgb: Rgb8,
    pub provenance: ColorProvenance,
    /// Contrast of `rgb` against the region mean color.
    pub contrast_ratio: f64,
    /// HSV produced by the complementary-color rule, before any fallback.
    pub candidate: Hsv,
}

/// The HSV candidate derived from a region's mean HSV: complementary hue,
/// saturation damped to 80% when above 200 (else maxed), value inverted
/// around 127.
pub fn complementary_candidate(mean: Hsv) -> Hsv {
    Hsv {
        h: (mean.h + 180.0).rem_euclid(360.0),
        s: if mean.s > 200.0 { (0.8 * mean.s).round() } else { 255.0 },
        v: if mean.v > 127.0 { 0.0 } else { 255.0 },
    }
}

/// Picks the watermark color for a region, falling back to black or white
/// (whichever contrasts more, black on ties) when the complementary
/// candidate does not exceed [`MIN_CONTRAST`].
pub fn pick_color(region_mean_hsv: Hsv, region_mean_rgb: Rgb8) -> WatermarkColor {
    let candidate = complementary_candidate(region_mean_hsv);
    let rgb = hsv_to_rgb(candidate);
    let ratio = wcag_contrast(rgb, region_mean_rgb);
    if ratio > MIN_CONTRAST {
        return WatermarkColor {
            rgb,
            provenance: ColorProvenance::Computed,
            contrast_ratio: ratio,
            candidate,
        };
    }
    let black = wcag_contrast(BLACK, region_mean_rgb);
    let white = wcag_contrast(WHITE, region_mean_rgb);
    if black >= white {
        WatermarkColor {
            rgb: BLACK,
            provenance: ColorProvenance::BlackFallback,
            contrast_ratio: black,
            candidate,
        }
    } else {
        WatermarkColor {
            rgb: WHITE,
            provenance: ColorProvenance::WhiteFallback,
            contrast_ratio: white,
            candidate,
        }
    }
}
