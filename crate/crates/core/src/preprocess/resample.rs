use super::{PreprocessError, RasterImage, Result, TokenGrid};

pub const CUBIC_A: f64 = -0.5;

/// Keys cubic convolution kernel with parameter [`CUBIC_A`].
#[inline]
pub fn cubic_kernel(x: f64) -> f64 {
    let a = CUBIC_A;
    let x = x.abs();
    if x < 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        (((x - 5.0) * x + 8.0) * x - 4.0) * a
    } else {
        0.0
    }
}

/// Normalized per-output-coordinate tap weights along one axis.
///
/// Row `o` covers the contiguous input range `first[o] .. first[o] + row(o).len()`.
#[derive(Debug, Clone)]
pub struct AxisWeights {
    in_len: usize,
    first: Vec<usize>,
    offsets: Vec<usize>,
    weights: Vec<f64>,
}

impl AxisWeights {
    pub fn new(in_len: usize, out_len: usize) -> Result<Self> {
        if in_len == 0 || out_len == 0 {
            return Err(PreprocessError::ZeroDimension);
        }
        let scale = in_len as f64 / out_len as f64;
        let stretch = scale.max(1.0);
        let support = 2.0 * stretch;
        let last = in_len as i64 - 1;
        let mut first = Vec::with_capacity(out_len);
        let mut offsets = Vec::with_capacity(out_len + 1);
        let mut weights = Vec::new();
        offsets.push(0);
        for o in 0..out_len {
            let center = (o as f64 + 0.5) * scale;
            let lo = (center - support - 0.5).floor() as i64;
            let hi = (center + support - 0.5).ceil() as i64;
            let clo = lo.clamp(0, last) as usize;
            let chi = hi.clamp(0, last) as usize;
            let mut row = vec![0.0; chi - clo + 1];
            for i in lo..=hi {
                let w = cubic_kernel((i as f64 + 0.5 - center) / stretch);
                if w != 0.0 {
                    row[i.clamp(0, last) as usize - clo] += w;
                }
            }
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|w| *w /= total);
            first.push(clo);
            weights.extend_from_slice(&row);
            offsets.push(weights.len());
        }
        Ok(Self {
            in_len,
            first,
            offsets,
            weights,
        })
    }

    pub fn in_len(&self) -> usize {
        self.in_len
    }

    pub fn out_len(&self) -> usize {
        self.first.len()
    }

    /// First input index and weights for output coordinate `o`.
    pub fn row(&self, o: usize) -> (usize, &[f64]) {
        (
            self.first[o],
            &self.weights[self.offsets[o]..self.offsets[o + 1]],
        )
    }
}

/// Separable resampling of a `w x h x c` plane of reals, horizontal pass first.
fn resample_plane(
    src: &[f64],
    w: usize,
    h: usize,
    c: usize,
    tw: usize,
    th: usize,
) -> Result<Vec<f64>> {
    let wx = AxisWeights::new(w, tw)?;
    let wy = AxisWeights::new(h, th)?;
    let mut tmp = vec![0.0; tw * h * c];
    for y in 0..h {
        let src_row = &src[y * w * c..(y + 1) * w * c];
        let dst_row = &mut tmp[y * tw * c..(y + 1) * tw * c];
        for ox in 0..tw {
            let (first, ws) = wx.row(ox);
            let out = &mut dst_row[ox * c..(ox + 1) * c];
            for (k, &wt) in ws.iter().enumerate() {
                let px = &src_row[(first + k) * c..(first + k + 1) * c];
                for ch in 0..c {
                    out[ch] += wt * px[ch];
                }
            }
        }
    }
    let mut out = vec![0.0; tw * th * c];
    let stride = tw * c;
    for oy in 0..th {
        let (first, ws) = wy.row(oy);
        let dst = &mut out[oy * stride..(oy + 1) * stride];
        for (k, &wt) in ws.iter().enumerate() {
            let srow = &tmp[(first + k) * stride..(first + k + 1) * stride];
            for (d, s) in dst.iter_mut().zip(srow) {
                *d += wt * s;
            }
        }
    }
    Ok(out)
}

/// Anything [`bicubic_resize`] can operate on.
pub trait Resizable: Sized {
    fn resized(&self, width: usize, height: usize) -> Result<Self>;
}

impl Resizable for RasterImage {
    fn resized(&self, width: usize, height: usize) -> Result<Self> {
        let c = self.channels() as usize;
        let src: Vec<f64> = self.data().iter().map(|&v| f64::from(v)).collect();
        let out = resample_plane(
            &src,
            self.width() as usize,
            self.height() as usize,
            c,
            width,
            height,
        )?;
        // f64::round rounds half away from zero
        let data = out
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        RasterImage::new(width as u32, height as u32, self.channels(), data)
    }
}

impl Resizable for TokenGrid {
    fn resized(&self, width: usize, height: usize) -> Result<Self> {
        if width != height {
            return Err(PreprocessError::Shape(format!(
                "token grids are square, got target {width}x{height}"
            )));
        }
        let src: Vec<f64> = self.data().iter().map(|&v| f64::from(v)).collect();
        let out = resample_plane(&src, self.side(), self.side(), self.dim(), width, height)?;
        TokenGrid::new(width, self.dim(), out.iter().map(|&v| v as f32).collect())
    }
}

/// Anti-aliased bicubic resize to `(width, height)`.
pub fn bicubic_resize<T: Resizable>(src: &T, target: (usize, usize)) -> Result<T> {
    src.resized(target.0, target.1)
}
