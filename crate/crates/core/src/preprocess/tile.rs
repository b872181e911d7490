use std::fmt;

use super::{PreprocessError, RasterImage, Result};
use crate::datastore::TileRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Top,
    Right,
    Bottom,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Top => "top",
            Side::Right => "right",
            Side::Bottom => "bottom",
        })
    }
}

/// Grows a tile by `margin` pixels on every side; the result must stay inside the slide.
pub fn expand_tile_coords(
    rec: &TileRecord,
    margin: i64,
    slide_bounds: (u64, u64),
) -> Result<TileRecord> {
    if margin < 0 {
        return Err(PreprocessError::NegativeMargin(margin));
    }
    let x = rec.x - margin;
    let y = rec.y - margin;
    let w = i64::from(rec.width) + 2 * margin;
    let h = i64::from(rec.height) + 2 * margin;
    let (bw, bh) = (slide_bounds.0 as i64, slide_bounds.1 as i64);
    let checks = [
        (Side::Left, -x),
        (Side::Top, -y),
        (Side::Right, x + w - bw),
        (Side::Bottom, y + h - bh),
    ];
    if let Some(&(side, by)) = checks.iter().find(|(_, over)| *over > 0) {
        return Err(PreprocessError::OutOfBounds { side, by });
    }
    let width =
        u32::try_from(w).map_err(|_| PreprocessError::Shape("expanded width overflow".into()))?;
    let height =
        u32::try_from(h).map_err(|_| PreprocessError::Shape("expanded height overflow".into()))?;
    Ok(TileRecord {
        x,
        y,
        width,
        height,
        ..rec.clone()
    })
}

/// Copies the `w x h` window whose top-left corner is `(x0, y0)`.
pub fn crop(img: &RasterImage, x0: u32, y0: u32, w: u32, h: u32) -> Result<RasterImage> {
    if x0 + w > img.width() || y0 + h > img.height() {
        return Err(PreprocessError::CropTooLarge {
            target: (w, h),
            source_dims: (img.width(), img.height()),
        });
    }
    let c = img.channels() as usize;
    let stride = img.width() as usize * c;
    let mut data = Vec::with_capacity(w as usize * h as usize * c);
    for row in y0..y0 + h {
        let start = row as usize * stride + x0 as usize * c;
        data.extend_from_slice(&img.data()[start..start + w as usize * c]);
    }
    RasterImage::new(w, h, img.channels(), data)
}

/// Center crop with offsets `floor((src - target) / 2)` per axis.
pub fn center_crop(img: &RasterImage, target: (u32, u32)) -> Result<RasterImage> {
    let (tw, th) = target;
    if tw > img.width() || th > img.height() {
        return Err(PreprocessError::CropTooLarge {
            target,
            source_dims: (img.width(), img.height()),
        });
    }
    crop(img, (img.width() - tw) / 2, (img.height() - th) / 2, tw, th)
}
