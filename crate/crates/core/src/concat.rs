//! Concatenation composites: the question tile joined to one side of the
//! scene, either padded with white or with the smaller image upscaled.

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};

use crate::color::BLACK;
use crate::composite::{BBox, CompositeArtifact, Method, Position, RenderInfo};
use crate::error::{Error, Result};
use crate::manifest::SampleRecord;
use crate::raster::{render_text_tile, Font, DEFAULT_TILE_SIDE};

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);

/// Joins `tile` to `scene` at `position`. Returns the composite and the
/// tile's rectangle in output coordinates.
///
/// The shared axis is width for top/bottom and height for left/right.
/// Without `resize` the shorter image is centered on white padding (odd
/// remainders put the extra pixel bottom/right); with `resize` it is scaled
/// bilinearly so both share the longer length.
pub fn concat_images(
    scene: &RgbImage,
    tile: &RgbImage,
    position: Position,
    resize: bool,
) -> (RgbImage, BBox) {
    let side_by_side = matches!(position, Position::Left | Position::Right);
    let shared = |img: &RgbImage| if side_by_side { img.height() } else { img.width() };

    let target = shared(scene).max(shared(tile));
    let fit = |img: &RgbImage| -> RgbImage {
        let len = shared(img);
        if !resize || len == target {
            return img.clone();
        }
        let other = if side_by_side { img.width() } else { img.height() };
        let scaled = ((f64::from(other) * f64::from(target) / f64::from(len)).round() as u32).max(1);
        let (w, h) = if side_by_side { (scaled, target) } else { (target, scaled) };
        imageops::resize(img, w, h, FilterType::Triangle)
    };
    let scene = fit(scene);
    let tile = fit(tile);

    let (width, height) = if side_by_side {
        (scene.width() + tile.width(), target)
    } else {
        (target, scene.height() + tile.height())
    };
    let mut out = RgbImage::from_pixel(width, height, WHITE);

    let center = |img: &RgbImage| (target - shared(img)) / 2;
    let (tile_at, scene_at) = match position {
        Position::Top => ((center(&tile), 0), (center(&scene), tile.height())),
        Position::Bottom => ((center(&tile), scene.height()), (center(&scene), 0)),
        Position::Left => ((0, center(&tile)), (tile.width(), center(&scene))),
        Position::Right => ((scene.width(), center(&tile)), (0, center(&scene))),
    };
    imageops::replace(&mut out, &scene, i64::from(scene_at.0), i64::from(scene_at.1));
    imageops::replace(&mut out, &tile, i64::from(tile_at.0), i64::from(tile_at.1));
    let bbox = BBox::new(tile_at.0, tile_at.1, tile_at.0 + tile.width(), tile_at.1 + tile.height());
    (out, bbox)
}

/// Renders the question on an opaque white 224×224 tile and joins it to the
/// scene.
pub fn compose_concat(
    scene: &RgbImage,
    record: &SampleRecord,
    position: Position,
    resize: bool,
    font: &Font,
) -> Result<CompositeArtifact> {
    if record.excluded {
        return Err(Error::invalid(format!("record {:?} is excluded", record.id)));
    }
    let tile = render_text_tile(&record.question, DEFAULT_TILE_SIDE, BLACK, [255, 255, 255, 255], font)?;
    let tile = RgbImage::from_fn(tile.side_px, tile.side_px, |x, y| {
        let p = tile.pixels.get_pixel(x, y);
        Rgb([p[0], p[1], p[2]])
    });
    let (pixels, bbox) = concat_images(scene, &tile, position, resize);
    let (width, height) = pixels.dimensions();
    Ok(CompositeArtifact {
        pixels,
        info: RenderInfo {
            id: record.id.clone(),
            bbox,
            method: if resize { Method::ConcatResize } else { Method::ConcatPad },
            position: Some(position),
            color: None,
            provenance: None,
            width,
            height,
        },
        color: None,
    })
}
