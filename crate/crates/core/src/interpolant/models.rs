use serde::{Deserialize, Serialize};

use super::tape::{Tape, Tensor, Var};
use super::{InterpolantError, Result};
use crate::preprocess::{bicubic_resize, RasterImage, TokenGrid};
use crate::rng;

/// Image side in pixels.
pub const IMAGE_SIDE: usize = 32;
/// VAE downsampling factor (f8).
pub const VAE_FACTOR: usize = 8;
/// Latent channels (d4).
pub const LATENT_CHANNELS: usize = 4;
/// Latent grid side, and denoiser token grid side (patch size 1).
pub const LATENT_SIDE: usize = IMAGE_SIDE / VAE_FACTOR;
pub const TOKENS: usize = LATENT_SIDE * LATENT_SIDE;
/// Flattened latent size per image.
pub const LATENT_DIM: usize = TOKENS * LATENT_CHANNELS;
const PATCH_DIM: usize = VAE_FACTOR * VAE_FACTOR * 3;

/// Named, ordered parameter tensors of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Adds a `rows x cols` tensor drawn from N(0, std^2), or zeros when `std == 0`.
    fn add(&mut self, name: &str, rows: usize, cols: usize, std: f64, seed: u64) -> usize {
        let mut data = vec![0.0; rows * cols];
        if std > 0.0 {
            let mut r = rng::stream(seed, self.values.len() as u64);
            rng::fill_normal(&mut r, &mut data);
            // f32-representable so checkpoints round-trip exactly
            data.iter_mut()
                .for_each(|v| *v = f64::from((*v * std) as f32));
        }
        self.names.push(name.to_string());
        self.values.push(Tensor::new(rows, cols, data));
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.values
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|t| t.data.len()).sum()
    }

    /// Replaces all values; shapes must match.
    pub fn assign(&mut self, values: &[Tensor]) -> Result<()> {
        same_shapes(&self.values, values)?;
        self.values.clone_from_slice(values);
        Ok(())
    }

    /// Parameter leaves on `tape`, tracked for gradients when `track` is set.
    pub fn bind(&self, tape: &mut Tape, track: bool) -> Vec<Var> {
        self.values
            .iter()
            .map(|t| {
                if track {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect()
    }
}

pub(crate) fn same_shapes(a: &[Tensor], b: &[Tensor]) -> Result<()> {
    if a.len() != b.len()
        || a.iter()
            .zip(b)
            .any(|(x, y)| (x.rows, x.cols) != (y.rows, y.cols))
    {
        return Err(InterpolantError::Shape("parameter shapes differ".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Linear {
    w: usize,
    b: usize,
}

impl Linear {
    fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        gain: f64,
        seed: u64,
    ) -> Self {
        let w = store.add(
            &format!("{name}.w"),
            fan_in,
            fan_out,
            gain / (fan_in as f64).sqrt(),
            seed,
        );
        let b = store.add(&format!("{name}.b"), 1, fan_out, 0.0, seed);
        Self { w, b }
    }

    fn apply(self, tape: &mut Tape, p: &[Var], x: Var) -> Var {
        let m = tape.matmul(x, p[self.w]);
        tape.add_row(m, p[self.b])
    }
}

/// Images scaled to [-1, 1] and cut into `(B*16) x 192` patch rows.
pub fn patchify(images: &[&RasterImage]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(images.len() * TOKENS * PATCH_DIM);
    for img in images {
        if (img.width() as usize, img.height() as usize, img.channels())
            != (IMAGE_SIDE, IMAGE_SIDE, 3)
        {
            return Err(InterpolantError::Shape(format!(
                "expected {IMAGE_SIDE}x{IMAGE_SIDE} RGB, got {}x{}x{}",
                img.width(),
                img.height(),
                img.channels()
            )));
        }
        let px = img.data();
        for py in 0..LATENT_SIDE {
            for pxi in 0..LATENT_SIDE {
                for dy in 0..VAE_FACTOR {
                    let row = (py * VAE_FACTOR + dy) * IMAGE_SIDE + pxi * VAE_FACTOR;
                    for &v in &px[row * 3..(row + VAE_FACTOR) * 3] {
                        data.push(f64::from(v) / 127.5 - 1.0);
                    }
                }
            }
        }
    }
    Ok(Tensor::new(images.len() * TOKENS, PATCH_DIM, data))
}

/// Inverse of [`patchify`], clamping to the 8-bit range.
pub fn unpatchify(patches: &Tensor) -> Vec<RasterImage> {
    patches
        .data
        .chunks_exact(TOKENS * PATCH_DIM)
        .map(|img| {
            let mut px = vec![0u8; IMAGE_SIDE * IMAGE_SIDE * 3];
            for (tok, patch) in img.chunks_exact(PATCH_DIM).enumerate() {
                let (py, pxi) = (tok / LATENT_SIDE, tok % LATENT_SIDE);
                for dy in 0..VAE_FACTOR {
                    let row = (py * VAE_FACTOR + dy) * IMAGE_SIDE + pxi * VAE_FACTOR;
                    for k in 0..VAE_FACTOR * 3 {
                        let v = (patch[dy * VAE_FACTOR * 3 + k] + 1.0) * 127.5;
                        px[row * 3 + k] = v.round().clamp(0.0, 255.0) as u8;
                    }
                }
            }
            RasterImage::new(IMAGE_SIDE as u32, IMAGE_SIDE as u32, 3, px).expect("fixed geometry")
        })
        .collect()
}

/// f8d4 autoencoder acting independently on each 8x8 patch.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyVae {
    pub params: ParamStore,
    enc1: Linear,
    enc2: Linear,
    dec1: Linear,
    dec2: Linear,
}

pub struct Encoded {
    pub mean: Var,
    pub log_var: Var,
}

impl ToyVae {
    pub fn new(hidden: usize, seed: u64) -> Self {
        let mut p = ParamStore::new();
        let s = rng::mix(seed, 0x7a3);
        let enc1 = Linear::new(&mut p, "vae.enc1", PATCH_DIM, hidden, 1.0, s);
        let enc2 = Linear::new(&mut p, "vae.enc2", hidden, 2 * LATENT_CHANNELS, 0.5, s);
        let dec1 = Linear::new(&mut p, "vae.dec1", LATENT_CHANNELS, hidden, 1.0, s);
        let dec2 = Linear::new(&mut p, "vae.dec2", hidden, PATCH_DIM, 0.5, s);
        Self {
            params: p,
            enc1,
            enc2,
            dec1,
            dec2,
        }
    }

    pub fn downsample_factor(&self) -> usize {
        VAE_FACTOR
    }

    pub fn latent_channels(&self) -> usize {
        LATENT_CHANNELS
    }

    /// Posterior mean and log-variance, `(B*16) x 4` each.
    pub fn encode(&self, tape: &mut Tape, p: &[Var], patches: Var) -> Encoded {
        let h = self.enc1.apply(tape, p, patches);
        let h = tape.silu(h);
        let o = self.enc2.apply(tape, p, h);
        Encoded {
            mean: tape.slice_cols(o, 0, LATENT_CHANNELS),
            log_var: tape.slice_cols(o, LATENT_CHANNELS, 2 * LATENT_CHANNELS),
        }
    }

    /// Patch reconstructions `(B*16) x 192` in [-1, 1] units.
    pub fn decode(&self, tape: &mut Tape, p: &[Var], latents: Var) -> Var {
        let h = self.dec1.apply(tape, p, latents);
        let h = tape.silu(h);
        self.dec2.apply(tape, p, h)
    }

    /// Posterior means for whole images, `B x 64`.
    pub fn encode_images(&self, images: &[&RasterImage]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let x = tape.constant(patchify(images)?);
        let e = self.encode(&mut tape, &p, x);
        Ok(tape.value(e.mean).data.clone())
    }

    /// Decodes `B x 64` latents to images.
    pub fn decode_latents(&self, latents: &[f64]) -> Result<Vec<RasterImage>> {
        if !latents.len().is_multiple_of(LATENT_DIM) {
            return Err(InterpolantError::Shape(format!(
                "latent buffer of {} is not a multiple of {LATENT_DIM}",
                latents.len()
            )));
        }
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let z = tape.constant(Tensor::new(
            latents.len() / LATENT_CHANNELS,
            LATENT_CHANNELS,
            latents.to_vec(),
        ));
        let out = self.decode(&mut tape, &p, z);
        Ok(unpatchify(tape.value(out)))
    }
}

/// Frozen random feature extractor: 4x4 patches, linear, tanh. Gives an 8x8 token grid and its
/// mean as the pooled feature.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherExtractor {
    weight: Vec<f64>,
    bias: Vec<f64>,
    dim: usize,
}

pub const TEACHER_PATCH: usize = 4;
pub const TEACHER_GRID: usize = IMAGE_SIDE / TEACHER_PATCH;

impl TeacherExtractor {
    pub fn new(dim: usize, seed: u64) -> Self {
        let fan_in = TEACHER_PATCH * TEACHER_PATCH * 3;
        let mut r = rng::stream(seed, 0x7eac);
        let mut weight = vec![0.0; fan_in * dim];
        rng::fill_normal(&mut r, &mut weight);
        let scale = 2.0 / (fan_in as f64).sqrt();
        weight.iter_mut().for_each(|w| *w *= scale);
        let mut bias = vec![0.0; dim];
        rng::fill_normal(&mut r, &mut bias);
        bias.iter_mut().for_each(|b| *b *= 0.1);
        Self { weight, bias, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Token grid (8x8xD) and pooled feature (D).
    pub fn extract(&self, img: &RasterImage) -> Result<(TokenGrid, Vec<f64>)> {
        if (img.width() as usize, img.height() as usize, img.channels())
            != (IMAGE_SIDE, IMAGE_SIDE, 3)
        {
            return Err(InterpolantError::Shape("teacher expects 32x32 RGB".into()));
        }
        let d = self.dim;
        let px = img.data();
        let mut grid = Vec::with_capacity(TEACHER_GRID * TEACHER_GRID * d);
        let mut pooled = vec![0.0; d];
        let mut patch = [0.0; TEACHER_PATCH * TEACHER_PATCH * 3];
        for gy in 0..TEACHER_GRID {
            for gx in 0..TEACHER_GRID {
                let mut k = 0;
                for dy in 0..TEACHER_PATCH {
                    let row = (gy * TEACHER_PATCH + dy) * IMAGE_SIDE + gx * TEACHER_PATCH;
                    for &v in &px[row * 3..(row + TEACHER_PATCH) * 3] {
                        patch[k] = f64::from(v) / 127.5 - 1.0;
                        k += 1;
                    }
                }
                for j in 0..d {
                    let mut acc = self.bias[j];
                    for (i, x) in patch.iter().enumerate() {
                        acc += x * self.weight[i * d + j];
                    }
                    let v = acc.tanh();
                    pooled[j] += v;
                    grid.push(v as f32);
                }
            }
        }
        let n = (TEACHER_GRID * TEACHER_GRID) as f64;
        pooled.iter_mut().for_each(|v| *v /= n);
        Ok((TokenGrid::new(TEACHER_GRID, d, grid)?, pooled))
    }

    /// Teacher tokens resampled onto the denoiser's 4x4 token grid, `16 x D`.
    pub fn alignment_targets(&self, img: &RasterImage) -> Result<(Vec<f64>, Vec<f64>)> {
        let (grid, pooled) = self.extract(img)?;
        let small = bicubic_resize(&grid, (LATENT_SIDE, LATENT_SIDE))?;
        Ok((small.data().iter().map(|&v| f64::from(v)).collect(), pooled))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserShape {
    pub hidden: usize,
    pub blocks: usize,
    pub mlp_ratio: usize,
    pub time_freqs: usize,
    pub cond_dim: usize,
    pub align_depth: usize,
    pub align_hidden: usize,
}

struct Block {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    fc1: Linear,
    fc2: Linear,
}

/// Token transformer over latent positions, with time and condition embeddings added to every
/// token and an alignment head tapping the hidden state after block `align_depth`.
pub struct DenoiserModel {
    pub params: ParamStore,
    pub shape: DenoiserShape,
    input: Linear,
    pos: usize,
    time1: Linear,
    time2: Linear,
    cond: Linear,
    null: usize,
    blocks: Vec<Block>,
    head1: Linear,
    head2: Linear,
    out: Linear,
}

impl std::fmt::Debug for DenoiserModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DenoiserModel")
            .field("shape", &self.shape)
            .field("scalars", &self.params.scalar_count())
            .finish()
    }
}

impl Clone for DenoiserModel {
    fn clone(&self) -> Self {
        let mut m = DenoiserModel::new(self.shape, 0);
        m.params = self.params.clone();
        m
    }
}

/// Per-sample conditioning: features `B x D_c` and a keep flag (false selects the null embedding).
#[derive(Debug, Clone)]
pub struct Conditioning {
    pub features: Tensor,
    pub keep: Vec<bool>,
}

impl Conditioning {
    pub fn null(batch: usize, dim: usize) -> Self {
        Self {
            features: Tensor::zeros(batch, dim),
            keep: vec![false; batch],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Depth {
    Full,
    /// Stop after the alignment head.
    AlignOnly,
}

pub struct DenoiserOut {
    pub velocity: Option<Var>,
    pub align: Option<Var>,
}

fn sinusoid(t: &[f64], freqs: usize) -> Tensor {
    let half = freqs / 2;
    let mut data = Vec::with_capacity(t.len() * 2 * half);
    for &tv in t {
        for k in 0..half {
            let w = (-(10_000f64).ln() * k as f64 / half as f64).exp();
            data.push((1000.0 * tv * w).sin());
        }
        for k in 0..half {
            let w = (-(10_000f64).ln() * k as f64 / half as f64).exp();
            data.push((1000.0 * tv * w).cos());
        }
    }
    Tensor::new(t.len(), 2 * half, data)
}

impl DenoiserModel {
    pub fn new(shape: DenoiserShape, seed: u64) -> Self {
        assert!(shape.blocks >= 1 && (1..=shape.blocks).contains(&shape.align_depth));
        assert!(shape.time_freqs >= 2 && shape.time_freqs.is_multiple_of(2));
        let s = rng::mix(seed, 0xde7);
        let h = shape.hidden;
        let mut p = ParamStore::new();
        let input = Linear::new(&mut p, "den.input", LATENT_CHANNELS, h, 1.0, s);
        let pos = p.add("den.pos", TOKENS, h, 0.1, s);
        let time1 = Linear::new(&mut p, "den.time1", shape.time_freqs, h, 1.0, s);
        let time2 = Linear::new(&mut p, "den.time2", h, h, 1.0, s);
        let cond = Linear::new(&mut p, "den.cond", shape.cond_dim, h, 1.0, s);
        let null = p.add("den.null", 1, h, 0.1, s);
        let blocks = (0..shape.blocks)
            .map(|b| {
                let n = |part: &str| format!("den.block{b}.{part}");
                Block {
                    q: Linear::new(&mut p, &n("q"), h, h, 1.0, s),
                    k: Linear::new(&mut p, &n("k"), h, h, 1.0, s),
                    v: Linear::new(&mut p, &n("v"), h, h, 1.0, s),
                    o: Linear::new(&mut p, &n("o"), h, h, 0.5, s),
                    fc1: Linear::new(&mut p, &n("fc1"), h, h * shape.mlp_ratio, 1.0, s),
                    fc2: Linear::new(&mut p, &n("fc2"), h * shape.mlp_ratio, h, 0.5, s),
                }
            })
            .collect();
        let head1 = Linear::new(&mut p, "den.align1", h, shape.align_hidden, 1.0, s);
        let head2 = Linear::new(
            &mut p,
            "den.align2",
            shape.align_hidden,
            shape.cond_dim,
            1.0,
            s,
        );
        let out = Linear::new(&mut p, "den.out", h, LATENT_CHANNELS, 0.5, s);
        Self {
            params: p,
            shape,
            input,
            pos,
            time1,
            time2,
            cond,
            null,
            blocks,
            head1,
            head2,
            out,
        }
    }

    /// `x_t` is `(B*16) x 4`; `t` and `cond` have one entry per sample.
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &[Var],
        x_t: Var,
        t: &[f64],
        cond: &Conditioning,
        depth: Depth,
    ) -> DenoiserOut {
        let b = t.len();
        debug_assert_eq!(tape.shape(x_t), (b * TOKENS, LATENT_CHANNELS));
        let mut h = self.input.apply(tape, p, x_t);
        let pos = tape.tile_rows(p[self.pos], b);
        h = tape.add(h, pos);

        let tf = tape.constant(sinusoid(t, self.shape.time_freqs));
        let te = self.time1.apply(tape, p, tf);
        let te = tape.silu(te);
        let te = self.time2.apply(tape, p, te);

        let cf = tape.constant(cond.features.clone());
        let ce = self.cond.apply(tape, p, cf);
        let keep: Vec<f64> = cond
            .keep
            .iter()
            .map(|&k| if k { 1.0 } else { 0.0 })
            .collect();
        let ce = tape.scale_rows(ce, keep.clone());
        let nulls = tape.tile_rows(p[self.null], b);
        let nulls = tape.scale_rows(nulls, keep.iter().map(|k| 1.0 - k).collect());
        let ce = tape.add(ce, nulls);

        let emb = tape.add(te, ce);
        let emb = tape.repeat_rows(emb, TOKENS);
        h = tape.add(h, emb);

        let mut align = None;
        for (i, blk) in self.blocks.iter().enumerate() {
            let a = tape.layernorm(h);
            let q = blk.q.apply(tape, p, a);
            let k = blk.k.apply(tape, p, a);
            let v = blk.v.apply(tape, p, a);
            let o = tape.attention(q, k, v, TOKENS);
            let o = blk.o.apply(tape, p, o);
            h = tape.add(h, o);
            let m = tape.layernorm(h);
            let m = blk.fc1.apply(tape, p, m);
            let m = tape.silu(m);
            let m = blk.fc2.apply(tape, p, m);
            h = tape.add(h, m);
            if i + 1 == self.shape.align_depth {
                let a = self.head1.apply(tape, p, h);
                let a = tape.silu(a);
                align = Some(self.head2.apply(tape, p, a));
                if depth == Depth::AlignOnly {
                    return DenoiserOut {
                        velocity: None,
                        align,
                    };
                }
            }
        }
        let f = tape.layernorm(h);
        DenoiserOut {
            velocity: Some(self.out.apply(tape, p, f)),
            align,
        }
    }

    /// Velocity for `B` flattened latents (`B x 64`), no gradients.
    pub fn velocity(&self, x: &[f64], t: f64, cond: &Conditioning) -> Vec<f64> {
        let b = x.len() / LATENT_DIM;
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let xv = tape.constant(Tensor::new(b * TOKENS, LATENT_CHANNELS, x.to_vec()));
        let out = self.forward(&mut tape, &p, xv, &vec![t; b], cond, Depth::Full);
        tape.value(out.velocity.expect("full depth")).data.clone()
    }
}

/// `1 - mean cosine` between projected hidden tokens and teacher tokens (both `N x D`).
pub fn align_loss(projected: &Tensor, teacher: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let h = tape.constant(projected.clone());
    let l = tape.cosine_loss(h, teacher)?;
    Ok(tape.value(l).scalar())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> DenoiserShape {
        DenoiserShape {
            hidden: 8,
            blocks: 2,
            mlp_ratio: 2,
            time_freqs: 8,
            cond_dim: 16,
            align_depth: 1,
            align_hidden: 8,
        }
    }

    fn image(seed: u8) -> RasterImage {
        RasterImage::new(
            32,
            32,
            3,
            (0..32 * 32 * 3)
                .map(|i| ((i * 7 + seed as usize * 31) % 256) as u8)
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn patchify_roundtrip() {
        let (a, b) = (image(1), image(2));
        let t = patchify(&[&a, &b]).unwrap();
        assert_eq!((t.rows, t.cols), (32, 192));
        assert_eq!(unpatchify(&t), vec![a, b]);
    }

    #[test]
    fn vae_shapes() {
        let vae = ToyVae::new(16, 3);
        let img = image(4);
        let z = vae.encode_images(&[&img, &img]).unwrap();
        assert_eq!(z.len(), 2 * LATENT_DIM);
        let out = vae.decode_latents(&z).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(
            (out[0].width(), out[0].height(), out[0].channels()),
            (32, 32, 3)
        );
        assert_eq!(vae.downsample_factor() * LATENT_SIDE, IMAGE_SIDE);
    }

    #[test]
    fn teacher_is_deterministic() {
        let a = TeacherExtractor::new(16, 9);
        let b = TeacherExtractor::new(16, 9);
        let img = image(5);
        assert_eq!(a.extract(&img).unwrap(), b.extract(&img).unwrap());
        assert_ne!(
            TeacherExtractor::new(16, 10).extract(&img).unwrap().1,
            a.extract(&img).unwrap().1
        );
        let (grid, pooled) = a.alignment_targets(&img).unwrap();
        assert_eq!((grid.len(), pooled.len()), (16 * 16, 16));
    }

    #[test]
    fn denoiser_output_shape() {
        let m = DenoiserModel::new(shape(), 1);
        let x = vec![0.3; 3 * LATENT_DIM];
        let v = m.velocity(&x, 0.4, &Conditioning::null(3, 16));
        assert_eq!(v.len(), x.len());
        assert!(v.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn align_loss_examples() {
        let t = Tensor::new(2, 2, vec![1.0, 2.0, -3.0, 0.5]);
        assert!(align_loss(&t, &t).unwrap().abs() < 1e-15);
        let neg = Tensor::new(2, 2, t.data.iter().map(|v| -v).collect());
        assert!((align_loss(&neg, &t).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn align_loss_by_hand_on_2x2_grid() {
        let mut r = rng::seeded(21);
        let mut h = vec![0.0; 12];
        let mut g = vec![0.0; 12];
        rng::fill_normal(&mut r, &mut h);
        rng::fill_normal(&mut r, &mut g);
        let mut total = 0.0;
        for pos in 0..4 {
            let a = &h[pos * 3..pos * 3 + 3];
            let b = &g[pos * 3..pos * 3 + 3];
            let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
            let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
            total += dot / (na * nb);
        }
        let expect = 1.0 - total / 4.0;
        let got = align_loss(&Tensor::new(4, 3, h), &Tensor::new(4, 3, g)).unwrap();
        assert!((got - expect).abs() < 1e-14);
        assert!((0.0..=2.0).contains(&got));
    }
}
