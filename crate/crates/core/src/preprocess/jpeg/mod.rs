//! Baseline sequential JPEG: quality-scaled Annex-K quantization, fixed Annex-K Huffman tables.

mod decoder;
mod encoder;
pub mod tables;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

pub use decoder::jpeg_decode;
pub use encoder::jpeg_encode;

use super::{PreprocessError, RasterImage, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChromaSubsampling {
    #[default]
    Yuv420,
    Yuv444,
}

impl fmt::Display for ChromaSubsampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChromaSubsampling::Yuv420 => "420",
            ChromaSubsampling::Yuv444 => "444",
        })
    }
}

impl FromStr for ChromaSubsampling {
    type Err = PreprocessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "420" | "4:2:0" => Ok(ChromaSubsampling::Yuv420),
            "444" | "4:4:4" => Ok(ChromaSubsampling::Yuv444),
            _ => Err(PreprocessError::Unsupported(format!(
                "chroma subsampling {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JpegConfig {
    pub quality: u8,
    pub chroma_subsampling: ChromaSubsampling,
}

impl Default for JpegConfig {
    fn default() -> Self {
        Self {
            quality: 70,
            chroma_subsampling: ChromaSubsampling::Yuv420,
        }
    }
}

impl JpegConfig {
    pub fn new(quality: u8, chroma_subsampling: ChromaSubsampling) -> Result<Self> {
        check_quality(quality)?;
        Ok(Self {
            quality,
            chroma_subsampling,
        })
    }
}

fn check_quality(q: u8) -> Result<()> {
    if (1..=100).contains(&q) {
        Ok(())
    } else {
        Err(PreprocessError::Quality(q))
    }
}

/// IJG quality scaling of the Annex-K base tables. Returns `(luma, chroma)` in natural order.
pub fn jpeg_quant_tables(quality: u8) -> Result<([u16; 64], [u16; 64])> {
    check_quality(quality)?;
    let q = u32::from(quality);
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let apply = |base: &[u16; 64]| {
        let mut out = [0u16; 64];
        for (o, &b) in out.iter_mut().zip(base) {
            *o = ((u32::from(b) * scale + 50) / 100).clamp(1, 255) as u16;
        }
        out
    };
    Ok((apply(&tables::BASE_LUMA_Q), apply(&tables::BASE_CHROMA_Q)))
}

/// Encode followed by decode. Output has the input's dimensions.
pub fn jpeg_roundtrip(img: &RasterImage, cfg: &JpegConfig) -> Result<RasterImage> {
    if img.channels() != 3 {
        return Err(PreprocessError::UnsupportedChannels(img.channels()));
    }
    jpeg_decode(&jpeg_encode(img, cfg)?)
}

/// Orthonormal 8-point DCT-II basis: `basis[u][x]`.
fn dct_basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut m = [[0.0; 8]; 8];
        for (u, row) in m.iter_mut().enumerate() {
            let cu = if u == 0 { (0.125f64).sqrt() } else { 0.5 };
            for (x, v) in row.iter_mut().enumerate() {
                *v = cu * ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        m
    })
}

/// Forward 2-D DCT of a level-shifted block, natural order in and out.
fn fdct(block: &[f64; 64]) -> [f64; 64] {
    let b = dct_basis();
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|x| b[u][x] * block[y * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            out[v * 8 + u] = (0..8).map(|y| b[v][y] * tmp[y * 8 + u]).sum();
        }
    }
    out
}

fn idct(coef: &[f64; 64]) -> [f64; 64] {
    let b = dct_basis();
    let mut tmp = [0.0; 64];
    for v in 0..8 {
        for x in 0..8 {
            tmp[v * 8 + x] = (0..8).map(|u| b[u][x] * coef[v * 8 + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|v| b[v][y] * tmp[v * 8 + x]).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quality_50_is_verbatim() {
        let (l, c) = jpeg_quant_tables(50).unwrap();
        assert_eq!(l, tables::BASE_LUMA_Q);
        assert_eq!(c, tables::BASE_CHROMA_Q);
    }

    #[test]
    fn quality_100_and_70() {
        let (l, c) = jpeg_quant_tables(100).unwrap();
        assert!(l.iter().chain(&c).all(|&v| v == 1));
        let (l70, _) = jpeg_quant_tables(70).unwrap();
        assert_eq!(l70[0], 10);
    }

    #[test]
    fn quality_range() {
        assert!(matches!(
            jpeg_quant_tables(0),
            Err(PreprocessError::Quality(0))
        ));
        assert!(jpeg_quant_tables(101).is_err());
        assert!(jpeg_quant_tables(1).unwrap().0.iter().all(|&v| v <= 255));
    }

    #[test]
    fn tables_monotone_in_quality() {
        for q in 1..100u8 {
            let (l0, c0) = jpeg_quant_tables(q).unwrap();
            let (l1, c1) = jpeg_quant_tables(q + 1).unwrap();
            for k in 0..64 {
                assert!(l0[k] >= l1[k] && c0[k] >= c1[k], "q={q} k={k}");
            }
        }
    }

    #[test]
    fn dct_inverts() {
        let block: [f64; 64] = std::array::from_fn(|i| ((i * 29) % 255) as f64 - 128.0);
        let back = idct(&fdct(&block));
        for (a, b) in block.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9);
        }
        let flat = fdct(&[10.0; 64]);
        assert!((flat[0] - 80.0).abs() < 1e-12);
        assert!(flat[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn huffman_tables_are_complete() {
        assert_eq!(
            tables::AC_LUMA_BITS
                .iter()
                .map(|&b| b as usize)
                .sum::<usize>(),
            162
        );
        assert_eq!(
            tables::AC_CHROMA_BITS
                .iter()
                .map(|&b| b as usize)
                .sum::<usize>(),
            162
        );
        assert_eq!(
            tables::DC_CHROMA_BITS
                .iter()
                .map(|&b| b as usize)
                .sum::<usize>(),
            12
        );
        let mut seen = [false; 64];
        tables::ZIGZAG.iter().for_each(|&z| seen[z] = true);
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn rejects_gray_roundtrip() {
        let gray = RasterImage::filled(8, 8, &[5]).unwrap();
        assert!(matches!(
            jpeg_roundtrip(&gray, &JpegConfig::default()),
            Err(PreprocessError::UnsupportedChannels(1))
        ));
    }
}
