//! Composite images and their JSONL sidecar metadata.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::color::{ColorProvenance, Rgb8, WatermarkColor};
use crate::error::{Error, Result};

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`, serialized as
/// `[x0, y0, x1, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct BBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BBox {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        BBox { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }

    pub fn within(&self, width: u32, height: u32) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1 && self.x1 <= width && self.y1 <= height
    }
}

impl From<[u32; 4]> for BBox {
    fn from([x0, y0, x1, y1]: [u32; 4]) -> Self {
        BBox { x0, y0, x1, y1 }
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Watermark,
    ConcatPad,
    ConcatResize,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Watermark => "watermark",
            Method::ConcatPad => "concat_pad",
            Method::ConcatResize => "concat_resize",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "watermark" => Ok(Method::Watermark),
            "concat_pad" => Ok(Method::ConcatPad),
            "concat_resize" => Ok(Method::ConcatResize),
            _ => Err(Error::invalid(format!("unknown render method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    Top,
    Bottom,
    Left,
    Right,
}

impl Position {
    pub const ALL: [Position; 4] = [Position::Top, Position::Bottom, Position::Left, Position::Right];
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Position::Top => "top",
            Position::Bottom => "bottom",
            Position::Left => "left",
            Position::Right => "right",
        })
    }
}

impl FromStr for Position {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "top" => Ok(Position::Top),
            "bottom" => Ok(Position::Bottom),
            "left" => Ok(Position::Left),
            "right" => Ok(Position::Right),
            _ => Err(Error::invalid(format!("unknown position {s:?}"))),
        }
    }
}

/// Per-composite metadata; one sidecar JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderInfo {
    pub id: String,
    pub bbox: BBox,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Position>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Rgb8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<ColorProvenance>,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone)]
pub struct CompositeArtifact {
    pub pixels: RgbImage,
    pub info: RenderInfo,
    /// Full color decision for watermark composites.
    pub color: Option<WatermarkColor>,
}

impl CompositeArtifact {
    pub fn bbox(&self) -> BBox {
        self.info.bbox
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.pixels.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image(other),
        })
    }
}

pub fn write_sidecar<W: Write>(infos: &[RenderInfo], mut out: W) -> std::io::Result<()> {
    for info in infos {
        serde_json::to_writer(&mut out, info)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_sidecar(path: impl AsRef<Path>) -> Result<Vec<RenderInfo>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_line_shape() {
        let info = RenderInfo {
            id: "q1".into(),
            bbox: BBox::new(10, 20, 160, 170),
            method: Method::Watermark,
            position: None,
            color: Some([0, 0, 0]),
            provenance: Some(ColorProvenance::BlackFallback),
            width: 640,
            height: 480,
        };
        let line = serde_json::to_string(&info).unwrap();
        assert_eq!(
            line,
            r#"{"id":"q1","bbox":[10,20,160,170],"method":"watermark","color":[0,0,0],"provenance":"black_fallback","width":640,"height":480}"#
        );
        let back: RenderInfo = serde_json::from_str(&line).unwrap();
        assert_eq!(back, info);
    }

    #[test]
    fn concat_sidecar_has_position() {
        let info = RenderInfo {
            id: "q".into(),
            bbox: BBox::new(0, 0, 480, 480),
            method: Method::ConcatResize,
            position: Some(Position::Left),
            color: None,
            provenance: None,
            width: 1120,
            height: 480,
        };
        let line = serde_json::to_string(&info).unwrap();
        assert!(line.contains(r#""method":"concat_resize","position":"left""#), "{line}");
        assert!(!line.contains("color"));
    }

    #[test]
    fn parse_enums() {
        assert_eq!("concat-pad".parse::<Method>().unwrap(), Method::ConcatPad);
        assert_eq!("Left".parse::<Position>().unwrap(), Position::Left);
        assert!("diagonal".parse::<Position>().is_err());
    }
}
