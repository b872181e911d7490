#![allow(dead_code)]

use genbench::preprocess::{ChromaSubsampling, RasterImage};
use image::ImageDecoder;

/// Deterministic 256x256 RGB texture: overlapping blobs, stripes and per-pixel hash noise.
pub fn textured_fixture() -> RasterImage {
    let (w, h) = (256u32, 256u32);
    let mut data = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (f64::from(x), f64::from(y));
            let blob = ((fx / 9.0).sin() * (fy / 13.0).cos() + (fx * fy / 900.0).sin()) * 0.5;
            let hash = (x.wrapping_mul(73_856_093) ^ y.wrapping_mul(19_349_663)) % 97;
            let noise = f64::from(hash) / 97.0 - 0.5;
            let r = 200.0 - 70.0 * blob + 30.0 * noise;
            let g = 120.0 + 50.0 * blob.abs() - 20.0 * noise;
            let b = 170.0 + 40.0 * (fx / 31.0 + fy / 17.0).sin() + 25.0 * noise;
            data.extend([r, g, b].map(|v| v.round().clamp(0.0, 255.0) as u8));
        }
    }
    RasterImage::new(w, h, 3, data).unwrap()
}

/// Smooth RGB gradient.
pub fn gradient_fixture(w: u32, h: u32) -> RasterImage {
    let data = (0..w * h)
        .flat_map(|i| {
            let (x, y) = (i % w, i / w);
            [
                (x * 255 / (w - 1)) as u8,
                (y * 255 / (h - 1)) as u8,
                ((x + y) * 255 / (w + h - 2)) as u8,
            ]
        })
        .collect();
    RasterImage::new(w, h, 3, data).unwrap()
}

/// Reference codec: `jpeg-encoder` (Annex-K tables, IJG scaling) for encoding.
pub fn reference_encode(img: &RasterImage, quality: u8, subsample: bool) -> Vec<u8> {
    let mut out = Vec::new();
    let mut enc = jpeg_encoder::Encoder::new(&mut out, quality);
    enc.set_sampling_factor(if subsample {
        jpeg_encoder::SamplingFactor::F_2_2
    } else {
        jpeg_encoder::SamplingFactor::F_1_1
    });
    enc.encode(
        img.data(),
        img.width() as u16,
        img.height() as u16,
        jpeg_encoder::ColorType::Rgb,
    )
    .unwrap();
    out
}

/// Reference decoder from the `image` crate.
pub fn reference_decode(bytes: &[u8]) -> RasterImage {
    let dec = image::codecs::jpeg::JpegDecoder::new(std::io::Cursor::new(bytes)).unwrap();
    let (w, h) = dec.dimensions();
    let channels = dec.color_type().channel_count();
    let mut buf = vec![0; dec.total_bytes() as usize];
    dec.read_image(&mut buf).unwrap();
    RasterImage::new(w, h, channels, buf).unwrap()
}

pub fn reference_roundtrip(img: &RasterImage, quality: u8, subsample: bool) -> RasterImage {
    reference_decode(&reference_encode(img, quality, subsample))
}

/// Pixel hash of [`textured_fixture`]; guards the goldens below.
pub const TEXTURED_FIXTURE_HASH: &str =
    "0411bf1d05f6927e98c41a715a0a894b74da6531e6c20e51ed02f353b344dcec";

/// libjpeg (via Pillow) roundtrip PSNR on [`textured_fixture`], from `tests/oracles/libjpeg_psnr.py`.
pub const LIBJPEG_PSNR: [(u8, ChromaSubsampling, f64); 6] = [
    (50, ChromaSubsampling::Yuv420, 30.0085),
    (50, ChromaSubsampling::Yuv444, 30.6447),
    (70, ChromaSubsampling::Yuv420, 30.4020),
    (70, ChromaSubsampling::Yuv444, 31.0442),
    (90, ChromaSubsampling::Yuv420, 30.8328),
    (90, ChromaSubsampling::Yuv444, 32.6905),
];
