//! Image and token-grid transforms of the validation pipeline: tile-coordinate expansion,
//! center crop, anti-aliased bicubic resampling and JPEG round-tripping.

mod io;
pub mod jpeg;
mod resample;
mod tile;

pub use io::{pixel_hash, read_png, tile_path, transform_tiles, write_png, Transform};
pub use jpeg::{
    jpeg_decode, jpeg_encode, jpeg_quant_tables, jpeg_roundtrip, ChromaSubsampling, JpegConfig,
};
pub use resample::{bicubic_resize, cubic_kernel, AxisWeights, Resizable, CUBIC_A};
pub use tile::{center_crop, crop, expand_tile_coords, Side};

use crate::ErrorClass;

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("expanded tile overflows the slide on the {side} side by {by} px")]
    OutOfBounds { side: Side, by: i64 },
    #[error("crop target {target:?} larger than source {source_dims:?}")]
    CropTooLarge {
        target: (u32, u32),
        source_dims: (u32, u32),
    },
    #[error("zero target dimension")]
    ZeroDimension,
    #[error("unsupported channel count {0}")]
    UnsupportedChannels(u8),
    #[error("JPEG quality {0} outside 1..=100")]
    Quality(u8),
    #[error("invalid raster: {0}")]
    Shape(String),
    #[error("jpeg decode: {0}")]
    Decode(String),
    #[error("unsupported JPEG feature: {0}")]
    Unsupported(String),
    #[error("png: {0}")]
    Png(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("negative margin {0}")]
    NegativeMargin(i64),
}

impl PreprocessError {
    pub fn class(&self) -> ErrorClass {
        match self {
            PreprocessError::CropTooLarge { .. }
            | PreprocessError::ZeroDimension
            | PreprocessError::Quality(_)
            | PreprocessError::NegativeMargin(_) => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, PreprocessError>;

/// 8-bit raster, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(PreprocessError::UnsupportedChannels(channels));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(PreprocessError::Shape(format!(
                "{width}x{height}x{channels} needs {expected} bytes, got {}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Image filled with a constant per-channel value.
    pub fn filled(width: u32, height: u32, value: &[u8]) -> Result<Self> {
        let data = value.repeat(width as usize * height as usize);
        Self::new(width, height, value.len() as u8, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.channels as usize;
        let i = (y as usize * self.width as usize + x as usize) * c;
        &self.data[i..i + c]
    }
}

/// A `side x side` grid of `dim`-channel tokens, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    side: usize,
    dim: usize,
    data: Vec<f32>,
}

impl TokenGrid {
    pub fn new(side: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if side == 0 || dim == 0 || data.len() != side * side * dim {
            return Err(PreprocessError::Shape(format!(
                "{side}x{side}x{dim} grid needs {} values, got {}",
                side * side * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(PreprocessError::Shape("non-finite token value".into()));
        }
        Ok(Self { side, dim, data })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn token(&self, row: usize, col: usize) -> &[f32] {
        let i = (row * self.side + col) * self.dim;
        &self.data[i..i + self.dim]
    }
}

/// Peak signal-to-noise ratio in dB between two same-shaped 8-bit images.
pub fn psnr(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels) {
        return Err(PreprocessError::Shape(
            "psnr operands differ in shape".into(),
        ));
    }
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum::<f64>()
        / a.data.len() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    })
}
