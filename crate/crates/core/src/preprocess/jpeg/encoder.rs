use super::tables::*;
use super::{fdct, jpeg_quant_tables, ChromaSubsampling, JpegConfig};
use crate::preprocess::{RasterImage, Result};

struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    fn new(out: Vec<u8>) -> Self {
        Self {
            out,
            acc: 0,
            nbits: 0,
        }
    }

    fn put(&mut self, code: u32, len: u8) {
        if len == 0 {
            return;
        }
        self.acc = (self.acc << len) | (code & ((1 << len) - 1));
        self.nbits += u32::from(len);
        while self.nbits >= 8 {
            let byte = (self.acc >> (self.nbits - 8)) as u8;
            self.out.push(byte);
            if byte == 0xff {
                self.out.push(0);
            }
            self.nbits -= 8;
        }
        self.acc &= (1 << self.nbits) - 1;
    }

    /// Pads the final byte with one-bits.
    fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            let pad = 8 - self.nbits as u8;
            self.put((1 << pad) - 1, pad);
        }
        self.out
    }
}

struct Huffman {
    dc: [(u16, u8); 256],
    ac: [(u16, u8); 256],
}

/// Magnitude category and the raw low bits of a coefficient.
#[inline]
fn category(v: i32) -> (u8, u32) {
    let mag = v.unsigned_abs();
    let size = (32 - mag.leading_zeros()) as u8;
    let bits = if v < 0 { (v - 1) as u32 } else { v as u32 };
    (size, bits & ((1u64 << size) - 1) as u32)
}

fn encode_block(w: &mut BitWriter, coef: &[i32; 64], pred: &mut i32, h: &Huffman) {
    let diff = coef[0] - *pred;
    *pred = coef[0];
    let (size, bits) = category(diff);
    let (code, len) = h.dc[size as usize];
    w.put(u32::from(code), len);
    w.put(bits, size);
    let mut run = 0;
    for &z in &ZIGZAG[1..] {
        let v = coef[z];
        if v == 0 {
            run += 1;
            continue;
        }
        while run > 15 {
            let (code, len) = h.ac[0xf0];
            w.put(u32::from(code), len);
            run -= 16;
        }
        let (size, bits) = category(v);
        let (code, len) = h.ac[(run << 4) | size as usize];
        w.put(u32::from(code), len);
        w.put(bits, size);
        run = 0;
    }
    if run > 0 {
        let (code, len) = h.ac[0x00];
        w.put(u32::from(code), len);
    }
}

/// Level-shifted 8x8 block at block coordinates `(bx, by)` of a plane, edges replicated.
fn load_block(plane: &[f64], pw: usize, ph: usize, bx: usize, by: usize) -> [f64; 64] {
    std::array::from_fn(|i| {
        let x = (bx * 8 + i % 8).min(pw - 1);
        let y = (by * 8 + i / 8).min(ph - 1);
        plane[y * pw + x] - 128.0
    })
}

fn quantize(block: &[f64; 64], q: &[u16; 64]) -> [i32; 64] {
    let c = fdct(block);
    std::array::from_fn(|i| (c[i] / f64::from(q[i])).round() as i32)
}

fn marker(out: &mut Vec<u8>, m: u8, payload: &[u8]) {
    out.extend_from_slice(&[0xff, m]);
    out.extend_from_slice(&((payload.len() + 2) as u16).to_be_bytes());
    out.extend_from_slice(payload);
}

fn dqt(out: &mut Vec<u8>, id: u8, q: &[u16; 64]) {
    let mut p = vec![id];
    p.extend(ZIGZAG.iter().map(|&z| q[z] as u8));
    marker(out, 0xdb, &p);
}

fn dht(out: &mut Vec<u8>, class_id: u8, bits: &[u8; 16], vals: &[u8]) {
    let mut p = vec![class_id];
    p.extend_from_slice(bits);
    p.extend_from_slice(vals);
    marker(out, 0xc4, &p);
}

/// Baseline JFIF encode. Grayscale input gives a single-component file.
pub fn jpeg_encode(img: &RasterImage, cfg: &JpegConfig) -> Result<Vec<u8>> {
    let (lq, cq) = jpeg_quant_tables(cfg.quality)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 || w > 0xffff || h > 0xffff {
        return Err(crate::preprocess::PreprocessError::Shape(format!(
            "{w}x{h} cannot be stored in a baseline JPEG"
        )));
    }
    let color = img.channels() == 3;
    let sub = color && cfg.chroma_subsampling == ChromaSubsampling::Yuv420;

    let mut out = vec![0xff, 0xd8];
    marker(
        &mut out,
        0xe0,
        b"JFIF\0\x01\x01\x00\x00\x01\x00\x01\x00\x00",
    );
    dqt(&mut out, 0, &lq);
    if color {
        dqt(&mut out, 1, &cq);
    }
    let mut sof = vec![8];
    sof.extend_from_slice(&(h as u16).to_be_bytes());
    sof.extend_from_slice(&(w as u16).to_be_bytes());
    if color {
        let ls = if sub { 0x22 } else { 0x11 };
        sof.extend_from_slice(&[3, 1, ls, 0, 2, 0x11, 1, 3, 0x11, 1]);
    } else {
        sof.extend_from_slice(&[1, 1, 0x11, 0]);
    }
    marker(&mut out, 0xc0, &sof);
    dht(&mut out, 0x00, &DC_LUMA_BITS, &DC_LUMA_VALS);
    dht(&mut out, 0x10, &AC_LUMA_BITS, &AC_LUMA_VALS);
    if color {
        dht(&mut out, 0x01, &DC_CHROMA_BITS, &DC_CHROMA_VALS);
        dht(&mut out, 0x11, &AC_CHROMA_BITS, &AC_CHROMA_VALS);
        marker(&mut out, 0xda, &[3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0]);
    } else {
        marker(&mut out, 0xda, &[1, 1, 0x00, 0, 63, 0]);
    }

    let luma = Huffman {
        dc: canonical_codes(&DC_LUMA_BITS, &DC_LUMA_VALS),
        ac: canonical_codes(&AC_LUMA_BITS, &AC_LUMA_VALS),
    };
    let chroma = Huffman {
        dc: canonical_codes(&DC_CHROMA_BITS, &DC_CHROMA_VALS),
        ac: canonical_codes(&AC_CHROMA_BITS, &AC_CHROMA_VALS),
    };

    let mut writer = BitWriter::new(out);
    if !color {
        let plane: Vec<f64> = img.data().iter().map(|&v| f64::from(v)).collect();
        let mut pred = 0;
        for by in 0..h.div_ceil(8) {
            for bx in 0..w.div_ceil(8) {
                let q = quantize(&load_block(&plane, w, h, bx, by), &lq);
                encode_block(&mut writer, &q, &mut pred, &luma);
            }
        }
    } else {
        let n = w * h;
        let (mut yp, mut cb, mut cr) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for (i, px) in img.data().chunks_exact(3).enumerate() {
            let (r, g, b) = (f64::from(px[0]), f64::from(px[1]), f64::from(px[2]));
            yp[i] = 0.299 * r + 0.587 * g + 0.114 * b;
            cb[i] = -0.168_735_892 * r - 0.331_264_108 * g + 0.5 * b + 128.0;
            cr[i] = 0.5 * r - 0.418_687_589 * g - 0.081_312_411 * b + 128.0;
        }
        let (cw, ch, cb, cr) = if sub {
            let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
            (cw, ch, downsample(&cb, w, h), downsample(&cr, w, h))
        } else {
            (w, h, cb, cr)
        };
        let mcu = if sub { 16 } else { 8 };
        let mut preds = [0i32; 3];
        for my in 0..h.div_ceil(mcu) {
            for mx in 0..w.div_ceil(mcu) {
                if sub {
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let q = quantize(&load_block(&yp, w, h, mx * 2 + dx, my * 2 + dy), &lq);
                        encode_block(&mut writer, &q, &mut preds[0], &luma);
                    }
                } else {
                    let q = quantize(&load_block(&yp, w, h, mx, my), &lq);
                    encode_block(&mut writer, &q, &mut preds[0], &luma);
                }
                let q = quantize(&load_block(&cb, cw, ch, mx, my), &cq);
                encode_block(&mut writer, &q, &mut preds[1], &chroma);
                let q = quantize(&load_block(&cr, cw, ch, mx, my), &cq);
                encode_block(&mut writer, &q, &mut preds[2], &chroma);
            }
        }
    }
    let mut out = writer.finish();
    out.extend_from_slice(&[0xff, 0xd9]);
    Ok(out)
}

/// 2x2 box average, edge samples replicated for odd sizes.
fn downsample(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = Vec::with_capacity(cw * ch);
    for y in 0..ch {
        let (y0, y1) = (2 * y, (2 * y + 1).min(h - 1));
        for x in 0..cw {
            let (x0, x1) = (2 * x, (2 * x + 1).min(w - 1));
            out.push(
                0.25 * (plane[y0 * w + x0]
                    + plane[y0 * w + x1]
                    + plane[y1 * w + x0]
                    + plane[y1 * w + x1]),
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories() {
        assert_eq!(category(0), (0, 0));
        assert_eq!(category(1), (1, 1));
        assert_eq!(category(-1), (1, 0));
        assert_eq!(category(-3), (2, 0));
        assert_eq!(category(5), (3, 5));
        assert_eq!(category(-1023).0, 10);
    }

    #[test]
    fn stuffing_after_ff() {
        let mut w = BitWriter::new(Vec::new());
        w.put(0xff, 8);
        w.put(0b1, 1);
        assert_eq!(w.finish(), vec![0xff, 0x00, 0xff, 0x00]);
    }

    #[test]
    fn stream_framing() {
        let img = RasterImage::filled(17, 9, &[10, 200, 30]).unwrap();
        let bytes = jpeg_encode(&img, &JpegConfig::default()).unwrap();
        assert_eq!(&bytes[..2], &[0xff, 0xd8]);
        assert_eq!(&bytes[bytes.len() - 2..], &[0xff, 0xd9]);
    }
}
