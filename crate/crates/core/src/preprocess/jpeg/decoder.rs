use super::idct;
use super::tables::ZIGZAG;
use crate::preprocess::{PreprocessError, RasterImage, Result};

fn bad(msg: impl Into<String>) -> PreprocessError {
    PreprocessError::Decode(msg.into())
}

#[derive(Clone)]
struct HuffTable {
    maxcode: [i32; 18],
    valptr: [i32; 17],
    mincode: [i32; 17],
    vals: Vec<u8>,
}

impl HuffTable {
    fn new(bits: &[u8; 16], vals: Vec<u8>) -> Result<Self> {
        if bits.iter().map(|&b| b as usize).sum::<usize>() != vals.len() {
            return Err(bad("huffman table length mismatch"));
        }
        let mut maxcode = [-1i32; 18];
        let mut valptr = [0i32; 17];
        let mut mincode = [0i32; 17];
        let mut code = 0i32;
        let mut k = 0i32;
        for l in 1..=16 {
            let n = i32::from(bits[l - 1]);
            if n > 0 {
                valptr[l] = k;
                mincode[l] = code;
                code += n;
                k += n;
                maxcode[l] = code - 1;
            }
            if code > (1 << l) {
                return Err(bad("over-subscribed huffman table"));
            }
            code <<= 1;
        }
        maxcode[17] = i32::MAX;
        Ok(Self {
            maxcode,
            valptr,
            mincode,
            vals,
        })
    }
}

struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u64,
    nbits: u32,
    at_marker: bool,
}

impl<'a> BitReader<'a> {
    fn new(data: &'a [u8], pos: usize) -> Self {
        Self {
            data,
            pos,
            acc: 0,
            nbits: 0,
            at_marker: false,
        }
    }

    fn fill(&mut self) {
        while self.nbits <= 56 {
            let byte = if self.at_marker || self.pos >= self.data.len() {
                0
            } else if self.data[self.pos] == 0xff {
                match self.data.get(self.pos + 1) {
                    Some(0) => {
                        self.pos += 2;
                        0xff
                    }
                    _ => {
                        self.at_marker = true;
                        0
                    }
                }
            } else {
                self.pos += 1;
                self.data[self.pos - 1]
            };
            self.acc |= u64::from(byte) << (56 - self.nbits);
            self.nbits += 8;
        }
    }

    fn bits(&mut self, n: u32) -> u32 {
        if n == 0 {
            return 0;
        }
        if self.nbits < n {
            self.fill();
        }
        let v = (self.acc >> (64 - n)) as u32;
        self.acc <<= n;
        self.nbits -= n;
        v
    }

    fn decode(&mut self, t: &HuffTable) -> Result<u8> {
        let mut code = 0i32;
        for l in 1..=16 {
            code = (code << 1) | self.bits(1) as i32;
            if code <= t.maxcode[l] {
                return Ok(t.vals[(t.valptr[l] + code - t.mincode[l]) as usize]);
            }
        }
        Err(bad("invalid huffman code"))
    }

    fn receive_extend(&mut self, size: u8) -> i32 {
        if size == 0 {
            return 0;
        }
        let v = self.bits(u32::from(size)) as i32;
        if v < (1 << (size - 1)) {
            v - (1 << size) + 1
        } else {
            v
        }
    }

    /// Drops buffered bits and consumes an expected RSTn marker.
    fn restart(&mut self) -> Result<()> {
        self.acc = 0;
        self.nbits = 0;
        self.at_marker = false;
        while self.pos + 1 < self.data.len() {
            if self.data[self.pos] == 0xff && (0xd0..=0xd7).contains(&self.data[self.pos + 1]) {
                self.pos += 2;
                return Ok(());
            }
            self.pos += 1;
        }
        Err(bad("missing restart marker"))
    }
}

struct Component {
    id: u8,
    h: usize,
    v: usize,
    tq: usize,
    /// Sample dimensions before upsampling.
    width: usize,
    height: usize,
    /// Block-padded plane.
    bw: usize,
    bh: usize,
    plane: Vec<u8>,
}

struct Frame {
    width: usize,
    height: usize,
    hmax: usize,
    vmax: usize,
    comps: Vec<Component>,
}

impl Frame {
    fn mcus(&self) -> (usize, usize) {
        (
            self.width.div_ceil(8 * self.hmax),
            self.height.div_ceil(8 * self.vmax),
        )
    }
}

fn read_u16(d: &[u8], p: usize) -> Result<usize> {
    d.get(p..p + 2)
        .map(|b| usize::from(u16::from_be_bytes([b[0], b[1]])))
        .ok_or_else(|| bad("truncated segment"))
}

fn decode_block(
    r: &mut BitReader,
    dc: &HuffTable,
    ac: &HuffTable,
    q: &[u16; 64],
    pred: &mut i32,
) -> Result<[u8; 64]> {
    let mut coef = [0.0f64; 64];
    let s = r.decode(dc)?;
    if s > 11 {
        return Err(bad("DC magnitude out of range"));
    }
    *pred += r.receive_extend(s);
    coef[0] = f64::from(*pred) * f64::from(q[0]);
    let mut k = 1;
    while k < 64 {
        let rs = r.decode(ac)?;
        let (run, size) = (usize::from(rs >> 4), rs & 15);
        if size == 0 {
            if run == 15 {
                k += 16;
                continue;
            }
            break;
        }
        k += run;
        if k > 63 {
            return Err(bad("AC run past end of block"));
        }
        let z = ZIGZAG[k];
        coef[z] = f64::from(r.receive_extend(size)) * f64::from(q[z]);
        k += 1;
    }
    let px = idct(&coef);
    Ok(std::array::from_fn(|i| {
        (px[i] + 128.0).round().clamp(0.0, 255.0) as u8
    }))
}

fn store(c: &mut Component, bx: usize, by: usize, block: &[u8; 64]) {
    if bx * 8 >= c.bw || by * 8 >= c.bh {
        return;
    }
    for y in 0..8 {
        let row = (by * 8 + y) * c.bw + bx * 8;
        c.plane[row..row + 8].copy_from_slice(&block[y * 8..y * 8 + 8]);
    }
}

/// Decodes a baseline (or extended-sequential Huffman, 8-bit) JPEG.
pub fn jpeg_decode(data: &[u8]) -> Result<RasterImage> {
    if data.len() < 4 || data[0] != 0xff || data[1] != 0xd8 {
        return Err(bad("missing SOI"));
    }
    let mut qt = [[0u16; 64]; 4];
    let mut dc_tables: [Option<HuffTable>; 4] = Default::default();
    let mut ac_tables: [Option<HuffTable>; 4] = Default::default();
    let mut frame: Option<Frame> = None;
    let mut restart_interval = 0usize;
    let mut pos = 2;
    loop {
        // Skip fill bytes and anything outside a marker.
        while pos < data.len() && data[pos] != 0xff {
            pos += 1;
        }
        while pos < data.len() && data[pos] == 0xff {
            pos += 1;
        }
        let Some(&m) = data.get(pos) else {
            return Err(bad("unexpected end of data"));
        };
        pos += 1;
        match m {
            0xd9 => break,
            0xd0..=0xd7 | 0x01 => continue,
            _ => {}
        }
        let len = read_u16(data, pos)?;
        if len < 2 || pos + len > data.len() {
            return Err(bad("segment overruns data"));
        }
        let seg = &data[pos + 2..pos + len];
        pos += len;
        match m {
            0xdb => {
                let mut p = 0;
                while p < seg.len() {
                    let (prec, id) = (seg[p] >> 4, usize::from(seg[p] & 15));
                    if id > 3 {
                        return Err(bad("quant table id"));
                    }
                    p += 1;
                    let width = if prec == 0 { 1 } else { 2 };
                    if p + 64 * width > seg.len() {
                        return Err(bad("truncated DQT"));
                    }
                    for k in 0..64 {
                        qt[id][ZIGZAG[k]] = if prec == 0 {
                            u16::from(seg[p + k])
                        } else {
                            u16::from_be_bytes([seg[p + 2 * k], seg[p + 2 * k + 1]])
                        };
                    }
                    p += 64 * width;
                }
            }
            0xc4 => {
                let mut p = 0;
                while p < seg.len() {
                    if p + 17 > seg.len() {
                        return Err(bad("truncated DHT"));
                    }
                    let (class, id) = (seg[p] >> 4, usize::from(seg[p] & 15));
                    if id > 3 || class > 1 {
                        return Err(bad("huffman table id"));
                    }
                    let bits: [u8; 16] = seg[p + 1..p + 17].try_into().unwrap();
                    let n: usize = bits.iter().map(|&b| b as usize).sum();
                    p += 17;
                    if p + n > seg.len() {
                        return Err(bad("truncated DHT values"));
                    }
                    let t = HuffTable::new(&bits, seg[p..p + n].to_vec())?;
                    p += n;
                    if class == 0 {
                        dc_tables[id] = Some(t);
                    } else {
                        ac_tables[id] = Some(t);
                    }
                }
            }
            0xdd => restart_interval = read_u16(seg, 0)?,
            0xc0 | 0xc1 => {
                if seg.len() < 6 || seg[0] != 8 {
                    return Err(PreprocessError::Unsupported(
                        "sample precision other than 8".into(),
                    ));
                }
                let height = read_u16(seg, 1)?;
                let width = read_u16(seg, 3)?;
                let nc = usize::from(seg[5]);
                if width == 0 || height == 0 {
                    return Err(PreprocessError::Unsupported("deferred image height".into()));
                }
                if !(nc == 1 || nc == 3) || seg.len() < 6 + 3 * nc {
                    return Err(PreprocessError::Unsupported(format!("{nc} components")));
                }
                let mut comps = Vec::with_capacity(nc);
                for c in 0..nc {
                    let b = &seg[6 + 3 * c..9 + 3 * c];
                    let (h, v) = (usize::from(b[1] >> 4), usize::from(b[1] & 15));
                    if !(1..=4).contains(&h) || !(1..=4).contains(&v) || b[2] > 3 {
                        return Err(bad("component sampling factors"));
                    }
                    comps.push(Component {
                        id: b[0],
                        h,
                        v,
                        tq: usize::from(b[2]),
                        width: 0,
                        height: 0,
                        bw: 0,
                        bh: 0,
                        plane: Vec::new(),
                    });
                }
                let hmax = comps.iter().map(|c| c.h).max().unwrap();
                let vmax = comps.iter().map(|c| c.v).max().unwrap();
                let mut f = Frame {
                    width,
                    height,
                    hmax,
                    vmax,
                    comps,
                };
                let (mx, my) = f.mcus();
                for c in &mut f.comps {
                    c.width = (width * c.h).div_ceil(hmax);
                    c.height = (height * c.v).div_ceil(vmax);
                    c.bw = mx * c.h * 8;
                    c.bh = my * c.v * 8;
                    c.plane = vec![0; c.bw * c.bh];
                }
                frame = Some(f);
            }
            0xc2 | 0xc3 | 0xc5..=0xc7 | 0xc9..=0xcb | 0xcd..=0xcf => {
                return Err(PreprocessError::Unsupported(format!(
                    "SOF marker 0x{m:02x}"
                )));
            }
            0xda => {
                let f = frame.as_mut().ok_or_else(|| bad("SOS before SOF"))?;
                let ns = usize::from(*seg.first().ok_or_else(|| bad("empty SOS"))?);
                if seg.len() < 1 + 2 * ns + 3 {
                    return Err(bad("truncated SOS"));
                }
                let mut members = Vec::with_capacity(ns);
                for s in 0..ns {
                    let id = seg[1 + 2 * s];
                    let t = seg[2 + 2 * s];
                    let ci = f
                        .comps
                        .iter()
                        .position(|c| c.id == id)
                        .ok_or_else(|| bad("scan names unknown component"))?;
                    let dc = dc_tables[usize::from(t >> 4) & 3]
                        .clone()
                        .ok_or_else(|| bad("missing DC table"))?;
                    let ac = ac_tables[usize::from(t & 15) & 3]
                        .clone()
                        .ok_or_else(|| bad("missing AC table"))?;
                    members.push((ci, dc, ac));
                }
                pos = decode_scan(data, pos, f, &members, &qt, restart_interval)?;
            }
            _ => {}
        }
    }
    let f = frame.ok_or_else(|| bad("no frame"))?;
    assemble(f)
}

fn decode_scan(
    data: &[u8],
    pos: usize,
    f: &mut Frame,
    members: &[(usize, HuffTable, HuffTable)],
    qt: &[[u16; 64]; 4],
    restart_interval: usize,
) -> Result<usize> {
    let mut r = BitReader::new(data, pos);
    let mut preds = vec![0i32; members.len()];
    let interleaved = members.len() > 1;
    let (mx, my) = f.mcus();
    let total = if interleaved {
        mx * my
    } else {
        let c = &f.comps[members[0].0];
        c.width.div_ceil(8) * c.height.div_ceil(8)
    };
    for n in 0..total {
        if restart_interval > 0 && n > 0 && n % restart_interval == 0 {
            r.restart()?;
            preds.iter_mut().for_each(|p| *p = 0);
        }
        if interleaved {
            let (ux, uy) = (n % mx, n / mx);
            for (k, (ci, dc, ac)) in members.iter().enumerate() {
                let c = &mut f.comps[*ci];
                for by in 0..c.v {
                    for bx in 0..c.h {
                        let block = decode_block(&mut r, dc, ac, &qt[c.tq], &mut preds[k])?;
                        store(c, ux * c.h + bx, uy * c.v + by, &block);
                    }
                }
            }
        } else {
            let (ci, dc, ac) = &members[0];
            let c = &mut f.comps[*ci];
            let per_row = c.width.div_ceil(8);
            let block = decode_block(&mut r, dc, ac, &qt[c.tq], &mut preds[0])?;
            store(c, n % per_row, n / per_row, &block);
        }
    }
    Ok(r.pos)
}

/// Upsamples one component to full resolution. 2x ratios use triangular ("fancy") filtering.
fn upsample(c: &Component, f: &Frame) -> Vec<u8> {
    let (fx, fy) = (f.hmax / c.h, f.vmax / c.v);
    let (w, h) = (f.width, f.height);
    let at =
        |x: usize, y: usize| i32::from(c.plane[y.min(c.height - 1) * c.bw + x.min(c.width - 1)]);
    let mut out = vec![0u8; w * h];
    match (
        fx,
        fy,
        f.hmax.is_multiple_of(c.h) && f.vmax.is_multiple_of(c.v),
    ) {
        (1, 1, _) => {
            for y in 0..h {
                for x in 0..w {
                    out[y * w + x] = at(x, y) as u8;
                }
            }
        }
        (2, 2, true) => {
            let mut colsum = vec![0i32; c.width];
            for y in 0..h {
                let sy = y / 2;
                let ny = if y % 2 == 0 {
                    sy.saturating_sub(1)
                } else {
                    sy + 1
                };
                for (sx, s) in colsum.iter_mut().enumerate() {
                    *s = 3 * at(sx, sy) + at(sx, ny);
                }
                for x in 0..w {
                    let sx = x / 2;
                    let this = colsum[sx];
                    let v = if x % 2 == 0 {
                        (3 * this + colsum[sx.saturating_sub(1)] + 8) >> 4
                    } else {
                        (3 * this + colsum[(sx + 1).min(c.width - 1)] + 7) >> 4
                    };
                    out[y * w + x] = v as u8;
                }
            }
        }
        (2, 1, true) => {
            for y in 0..h {
                for x in 0..w {
                    let sx = x / 2;
                    let v = if x % 2 == 0 {
                        (3 * at(sx, y) + at(sx.saturating_sub(1), y) + 1) >> 2
                    } else {
                        (3 * at(sx, y) + at(sx + 1, y) + 2) >> 2
                    };
                    out[y * w + x] = v as u8;
                }
            }
        }
        _ => {
            for y in 0..h {
                for x in 0..w {
                    out[y * w + x] = at(x * c.h / f.hmax, y * c.v / f.vmax) as u8;
                }
            }
        }
    }
    out
}

fn assemble(f: Frame) -> Result<RasterImage> {
    let (w, h) = (f.width as u32, f.height as u32);
    if f.comps.len() == 1 {
        return RasterImage::new(w, h, 1, upsample(&f.comps[0], &f));
    }
    let planes: Vec<Vec<u8>> = f.comps.iter().map(|c| upsample(c, &f)).collect();
    let mut rgb = Vec::with_capacity(f.width * f.height * 3);
    for i in 0..f.width * f.height {
        let y = f64::from(planes[0][i]);
        let cb = f64::from(planes[1][i]) - 128.0;
        let cr = f64::from(planes[2][i]) - 128.0;
        for v in [
            y + 1.402 * cr,
            y - 0.344_136_286 * cb - 0.714_136_286 * cr,
            y + 1.772 * cb,
        ] {
            rgb.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    RasterImage::new(w, h, 3, rgb)
}

#[cfg(test)]
mod tests {
    use super::super::{jpeg_encode, jpeg_roundtrip, ChromaSubsampling, JpegConfig};
    use super::*;

    #[test]
    fn garbage_is_rejected() {
        assert!(jpeg_decode(&[1, 2, 3, 4]).is_err());
        assert!(jpeg_decode(&[0xff, 0xd8, 0xff]).is_err());
    }

    #[test]
    fn truncated_stream_is_an_error_not_a_panic() {
        let img = RasterImage::filled(40, 40, &[90, 20, 200]).unwrap();
        let bytes = jpeg_encode(&img, &JpegConfig::default()).unwrap();
        for cut in [10, 100, bytes.len() / 2] {
            let _ = jpeg_decode(&bytes[..cut]);
        }
    }

    #[test]
    fn mid_gray_survives() {
        for sub in [ChromaSubsampling::Yuv420, ChromaSubsampling::Yuv444] {
            let img = RasterImage::filled(37, 29, &[128, 128, 128]).unwrap();
            let out = jpeg_roundtrip(&img, &JpegConfig::new(70, sub).unwrap()).unwrap();
            assert_eq!((out.width(), out.height()), (37, 29));
            assert!(out.data().iter().all(|&v| (127..=129).contains(&v)));
        }
    }

    #[test]
    fn grayscale_stream() {
        let data: Vec<u8> = (0..24 * 16).map(|i| (i % 24 * 10) as u8).collect();
        let img = RasterImage::new(24, 16, 1, data).unwrap();
        let out = jpeg_decode(
            &jpeg_encode(
                &img,
                &JpegConfig::new(95, ChromaSubsampling::Yuv444).unwrap(),
            )
            .unwrap(),
        )
        .unwrap();
        assert_eq!(out.channels(), 1);
        assert!(crate::preprocess::psnr(&img, &out).unwrap() > 35.0);
    }

    #[test]
    fn restart_markers_are_honored() {
        // Hand-insert DRI=1 and RST markers by re-encoding one 8x8 gray block per MCU.
        let img = RasterImage::filled(16, 8, &[60]).unwrap();
        let base = jpeg_encode(
            &img,
            &JpegConfig::new(90, ChromaSubsampling::Yuv444).unwrap(),
        )
        .unwrap();
        let sos = base.windows(2).position(|w| w == [0xff, 0xda]).unwrap();
        let sos_len = usize::from(u16::from_be_bytes([base[sos + 2], base[sos + 3]]));
        let scan_start = sos + 2 + sos_len;
        let single = RasterImage::filled(8, 8, &[60]).unwrap();
        let one = jpeg_encode(
            &single,
            &JpegConfig::new(90, ChromaSubsampling::Yuv444).unwrap(),
        )
        .unwrap();
        let one_sos = one.windows(2).position(|w| w == [0xff, 0xda]).unwrap();
        let one_start =
            one_sos + 2 + usize::from(u16::from_be_bytes([one[one_sos + 2], one[one_sos + 3]]));
        let block_bytes = &one[one_start..one.len() - 2];
        let mut stream = base[..sos].to_vec();
        stream.extend_from_slice(&[0xff, 0xdd, 0, 4, 0, 1]);
        stream.extend_from_slice(&base[sos..scan_start]);
        stream.extend_from_slice(block_bytes);
        stream.extend_from_slice(&[0xff, 0xd0]);
        stream.extend_from_slice(block_bytes);
        stream.extend_from_slice(&[0xff, 0xd9]);
        let out = jpeg_decode(&stream).unwrap();
        assert!(
            out.data().iter().all(|&v| (59..=61).contains(&v)),
            "{:?}",
            out.data()
        );
    }
}
