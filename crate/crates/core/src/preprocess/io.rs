use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::jpeg::{jpeg_roundtrip, JpegConfig};
use super::resample::bicubic_resize;
use super::tile::center_crop;
use super::{PreprocessError, RasterImage, Result};
use crate::datastore::TileManifest;

fn png_err(e: impl std::fmt::Display) -> PreprocessError {
    PreprocessError::Png(e.to_string())
}

pub fn write_png(path: &Path, img: &RasterImage) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(w, img.width(), img.height());
    enc.set_color(if img.channels() == 3 {
        png::ColorType::Rgb
    } else {
        png::ColorType::Grayscale
    });
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(img.data()).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(())
}

pub fn read_png(path: &Path) -> Result<RasterImage> {
    let mut dec = png::Decoder::new(BufReader::new(File::open(path)?));
    dec.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = dec.read_info().map_err(png_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| png_err("image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    buf.truncate(info.buffer_size());
    let (w, h) = (info.width, info.height);
    match info.color_type {
        png::ColorType::Rgb => RasterImage::new(w, h, 3, buf),
        png::ColorType::Grayscale => RasterImage::new(w, h, 1, buf),
        png::ColorType::Rgba => RasterImage::new(w, h, 3, strip_alpha(&buf, 4)),
        png::ColorType::GrayscaleAlpha => RasterImage::new(w, h, 1, strip_alpha(&buf, 2)),
        other => Err(png_err(format!("unsupported color type {other:?}"))),
    }
}

fn strip_alpha(buf: &[u8], stride: usize) -> Vec<u8> {
    buf.chunks_exact(stride)
        .flat_map(|px| px[..stride - 1].iter().copied())
        .collect()
}

/// Hex SHA-256 of the image geometry followed by its samples.
pub fn pixel_hash(img: &RasterImage) -> String {
    let mut h = Sha256::new();
    h.update(img.width().to_le_bytes());
    h.update(img.height().to_le_bytes());
    h.update([img.channels()]);
    h.update(img.data());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// One step of a batch transform chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    CenterCrop(u32, u32),
    Resize(u32, u32),
    Jpeg(JpegConfig),
}

impl Transform {
    pub fn apply(&self, img: &RasterImage) -> Result<RasterImage> {
        match *self {
            Transform::CenterCrop(w, h) => center_crop(img, (w, h)),
            Transform::Resize(w, h) => bicubic_resize(img, (w as usize, h as usize)),
            Transform::Jpeg(cfg) => jpeg_roundtrip(img, &cfg),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Transform::CenterCrop(w, h) => format!("crop{w}x{h}"),
            Transform::Resize(w, h) => format!("resize{w}x{h}"),
            Transform::Jpeg(c) => format!("jpeg-q{}-{}", c.quality, c.chroma_subsampling),
        }
    }
}

/// Location of a tile's PNG under a tile directory: `<root>/<slide_id>/<tile_id>.png`.
pub fn tile_path(root: &Path, slide_id: &str, tile_id: &str) -> PathBuf {
    root.join(slide_id).join(format!("{tile_id}.png"))
}

/// Applies `ops` to every manifest tile found under `src`, mirroring the layout under `dst`.
///
/// Returns one log line per tile: `tile_id<TAB>ops<TAB>sha256`. The same lines are written to
/// `dst/transform.log`.
pub fn transform_tiles(
    manifest: &TileManifest,
    src: &Path,
    dst: &Path,
    ops: &[Transform],
) -> Result<Vec<String>> {
    let ops_label = if ops.is_empty() {
        "none".to_string()
    } else {
        ops.iter()
            .map(Transform::label)
            .collect::<Vec<_>>()
            .join(",")
    };
    let lines = crate::par::map_indexed(manifest.entries.len(), |i| -> Result<String> {
        let rec = &manifest.entries[i];
        let mut img = read_png(&tile_path(src, &rec.slide_id, &rec.tile_id))?;
        for op in ops {
            img = op.apply(&img)?;
        }
        let out = tile_path(dst, &rec.slide_id, &rec.tile_id);
        if let Some(parent) = out.parent() {
            fs::create_dir_all(parent)?;
        }
        write_png(&out, &img)?;
        Ok(format!(
            "{}\t{}\t{}",
            rec.tile_id,
            ops_label,
            pixel_hash(&img)
        ))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(dst)?;
    let mut log = BufWriter::new(File::create(dst.join("transform.log"))?);
    for l in &lines {
        writeln!(log, "{l}")?;
    }
    log.flush()?;
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpdir(tag: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("genbench-io-{tag}-{}", std::process::id()));
        fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn png_roundtrip_rgb_and_gray() {
        let d = tmpdir("png");
        let rgb = RasterImage::new(3, 2, 3, (0..18).collect()).unwrap();
        write_png(&d.join("a.png"), &rgb).unwrap();
        assert_eq!(read_png(&d.join("a.png")).unwrap(), rgb);
        let gray = RasterImage::new(2, 2, 1, vec![0, 50, 100, 255]).unwrap();
        write_png(&d.join("g.png"), &gray).unwrap();
        assert_eq!(read_png(&d.join("g.png")).unwrap(), gray);
        fs::remove_dir_all(d).ok();
    }

    #[test]
    fn hash_depends_on_geometry() {
        let a = RasterImage::new(2, 1, 1, vec![1, 2]).unwrap();
        let b = RasterImage::new(1, 2, 1, vec![1, 2]).unwrap();
        assert_ne!(pixel_hash(&a), pixel_hash(&b));
        assert_eq!(pixel_hash(&a).len(), 64);
    }
}
