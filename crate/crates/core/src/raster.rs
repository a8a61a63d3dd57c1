//! Question-text tiles: square images holding word-wrapped text at the
//! largest font size that fits.

use std::path::Path;
use std::sync::OnceLock;

use ab_glyph::{Font as _, FontArc, Glyph, GlyphId, PxScale, PxScaleFont, ScaleFont};
use image::{Rgba, RgbaImage};

use crate::color::Rgb8;
use crate::error::{Error, Result};

pub const DEFAULT_TILE_SIDE: u32 = 224;
pub const MIN_TILE_SIDE: u32 = 32;
pub const MIN_FONT_PX: u32 = 6;
/// Blank border kept on every side of the text block.
pub const MARGIN_PX: u32 = 2;

static DEJAVU_SANS_BOLD: &[u8] = include_bytes!("../assets/fonts/DejaVuSans-Bold.ttf");

/// A loaded font face. Cheap to clone; share one across threads.
#[derive(Clone)]
pub struct Font {
    face: FontArc,
    name: String,
}

impl std::fmt::Debug for Font {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Font").field("name", &self.name).finish()
    }
}

impl Font {
    /// The bundled DejaVuSans-Bold face.
    pub fn dejavu_sans_bold() -> &'static Font {
        static FONT: OnceLock<Font> = OnceLock::new();
        FONT.get_or_init(|| Font {
            face: FontArc::try_from_slice(DEJAVU_SANS_BOLD).expect("bundled font parses"),
            name: "DejaVuSans-Bold".into(),
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Font> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let face =
            FontArc::try_from_vec(bytes).map_err(|e| Error::Font(format!("{}: {e}", path.display())))?;
        Ok(Font {
            face,
            name: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

#[derive(Debug, Clone)]
pub struct TextTile {
    pub pixels: RgbaImage,
    pub side_px: u32,
    pub text: String,
    pub font_px: u32,
    pub line_count: usize,
    /// Characters the font could not draw, replaced by `?`.
    pub warnings: Vec<String>,
}

impl TextTile {
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.pixels.save(path.as_ref())?;
        Ok(())
    }
}

/// Replaces characters without a glyph by `?` and control characters by
/// spaces (newlines are kept as hard breaks).
fn sanitize(text: &str, font: &FontArc, warnings: &mut Vec<String>) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.trim().chars() {
        if c == '\n' {
            out.push('\n');
        } else if c.is_whitespace() || c.is_control() {
            out.push(' ');
        } else if font.glyph_id(c) == GlyphId(0) {
            warnings.push(format!("no glyph for {c:?} (U+{:04X}), drew '?'", c as u32));
            out.push('?');
        } else {
            out.push(c);
        }
    }
    out
}

struct Measure<'a> {
    scaled: PxScaleFont<&'a FontArc>,
}

impl Measure<'_> {
    fn width(&self, s: &str) -> f32 {
        let mut w = 0.0;
        let mut prev: Option<GlyphId> = None;
        for c in s.chars() {
            let id = self.scaled.glyph_id(c);
            if let Some(p) = prev {
                w += self.scaled.kern(p, id);
            }
            w += self.scaled.h_advance(id);
            prev = Some(id);
        }
        w
    }

    /// Greedy word wrap; words wider than a line are split between
    /// characters.
    fn wrap(&self, text: &str, max_width: f32) -> Vec<String> {
        let mut lines = Vec::new();
        for paragraph in text.split('\n') {
            let mut current = String::new();
            for word in paragraph.split_whitespace() {
                let candidate =
                    if current.is_empty() { word.to_owned() } else { format!("{current} {word}") };
                if self.width(&candidate) <= max_width {
                    current = candidate;
                    continue;
                }
                if !current.is_empty() {
                    lines.push(std::mem::take(&mut current));
                }
                if self.width(word) <= max_width {
                    current = word.to_owned();
                    continue;
                }
                for c in word.chars() {
                    let mut piece = current.clone();
                    piece.push(c);
                    if !current.is_empty() && self.width(&piece) > max_width {
                        lines.push(std::mem::take(&mut current));
                        current.push(c);
                    } else {
                        current = piece;
                    }
                }
            }
            lines.push(current);
        }
        lines
    }
}

struct Layout {
    glyphs: Vec<Glyph>,
    line_count: usize,
}

/// Lays `text` out at `px`, centered in a `side`×`side` tile. Returns `None`
/// when any glyph's ink would leave the margin-inset area.
fn layout(font: &FontArc, text: &str, px: u32, side: u32) -> Option<Layout> {
    let scale = PxScale::from(px as f32);
    let measure = Measure { scaled: font.as_scaled(scale) };
    let inner = (side - 2 * MARGIN_PX) as f32;
    let lines = measure.wrap(text, inner);
    let scaled = &measure.scaled;
    let ascent = scaled.ascent();
    let descent = scaled.descent();
    let line_height = ascent - descent + scaled.line_gap();
    let n = lines.len() as f32;
    let block = n * (ascent - descent) + (n - 1.0) * scaled.line_gap();
    if block > inner {
        return None;
    }

    let lo = MARGIN_PX as f32;
    let hi = (side - MARGIN_PX) as f32;
    let top = lo + (inner - block) / 2.0;
    let mut glyphs = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let width = measure.width(line);
        let mut x = lo + (inner - width) / 2.0;
        let baseline = top + ascent + i as f32 * line_height;
        let mut prev: Option<GlyphId> = None;
        for c in line.chars() {
            let id = scaled.glyph_id(c);
            if let Some(p) = prev {
                x += scaled.kern(p, id);
            }
            let glyph = id.with_scale_and_position(scale, ab_glyph::point(x, baseline));
            x += scaled.h_advance(id);
            prev = Some(id);
            if let Some(outline) = font.outline_glyph(glyph.clone()) {
                let b = outline.px_bounds();
                if b.min.x < lo || b.min.y < lo || b.max.x > hi || b.max.y > hi {
                    return None;
                }
                glyphs.push(glyph);
            }
        }
    }
    Some(Layout { glyphs, line_count: lines.len() })
}

fn over(fg: Rgb8, coverage: f32, bg: [u8; 4]) -> [u8; 4] {
    let a = (coverage.clamp(0.0, 1.0) * 255.0).round() / 255.0;
    if a == 0.0 {
        return bg;
    }
    let da = f32::from(bg[3]) / 255.0;
    let out_a = a + da * (1.0 - a);
    let mix = |f: u8, b: u8| {
        ((f32::from(f) * a + f32::from(b) * da * (1.0 - a)) / out_a).round().clamp(0.0, 255.0) as u8
    };
    [mix(fg[0], bg[0]), mix(fg[1], bg[1]), mix(fg[2], bg[2]), (out_a * 255.0).round() as u8]
}

/// Renders `text` into a square tile of `side_px` pixels, choosing the
/// largest font size in `[MIN_FONT_PX, side_px]` (binary search) at which
/// the wrapped text fits inside the margins. A `bg` alpha of 0 yields a
/// transparent tile for watermarking.
pub fn render_text_tile(text: &str, side_px: u32, fg: Rgb8, bg: [u8; 4], font: &Font) -> Result<TextTile> {
    if text.trim().is_empty() {
        return Err(Error::invalid("tile text is empty"));
    }
    if side_px < MIN_TILE_SIDE {
        return Err(Error::invalid(format!("tile side {side_px} is below the minimum of {MIN_TILE_SIDE}")));
    }
    let mut warnings = Vec::new();
    let clean = sanitize(text, &font.face, &mut warnings);
    let unrenderable = || Error::Unrenderable { chars: text.chars().count(), side_px };

    let mut best = layout(&font.face, &clean, MIN_FONT_PX, side_px).ok_or_else(unrenderable)?;
    let (mut lo, mut hi) = (MIN_FONT_PX, side_px);
    // invariant: lo fits, anything above hi does not
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        match layout(&font.face, &clean, mid, side_px) {
            Some(l) => {
                lo = mid;
                best = l;
            }
            None => hi = mid - 1,
        }
    }
    let font_px = lo;

    let side = side_px as usize;
    let mut coverage = vec![0f32; side * side];
    for glyph in best.glyphs {
        if let Some(outline) = font.face.outline_glyph(glyph) {
            let b = outline.px_bounds();
            let (ox, oy) = (b.min.x as i64, b.min.y as i64);
            outline.draw(|x, y, c| {
                let (px, py) = (ox + i64::from(x), oy + i64::from(y));
                if (0..side as i64).contains(&px) && (0..side as i64).contains(&py) {
                    let cell = &mut coverage[py as usize * side + px as usize];
                    *cell = cell.max(c);
                }
            });
        }
    }

    let pixels = RgbaImage::from_fn(side_px, side_px, |x, y| {
        Rgba(over(fg, coverage[y as usize * side + x as usize], bg))
    });

    Ok(TextTile { pixels, side_px, text: text.to_owned(), font_px, line_count: best.line_count, warnings })
}
