use super::models::{Conditioning, DenoiserModel, TeacherExtractor, ToyVae, LATENT_DIM};
use super::path::{cfg_velocity, SamplerConfig};
use super::sampler::{sample, VelocityField};
use super::tape::Tensor;
use super::{InterpolantError, Result};
use crate::par;
use crate::preprocess::RasterImage;

/// Learned velocity. With `conditions` (`n x D_c`, one row per chain) sampling is conditional
/// and guided by `cfg`; without, every chain uses the null embedding.
pub struct ModelField<'a> {
    pub denoiser: &'a DenoiserModel,
    pub conditions: Option<&'a [f64]>,
    pub cfg: SamplerConfig,
}

impl VelocityField for ModelField<'_> {
    fn dim(&self) -> usize {
        LATENT_DIM
    }

    fn velocity(&self, x: &[f64], t: f64, first_chain: usize, out: &mut [f64]) -> Result<()> {
        let b = x.len() / LATENT_DIM;
        let dc = self.denoiser.shape.cond_dim;
        let null = Conditioning::null(b, dc);
        let v = match self.conditions {
            None => self.denoiser.velocity(x, t, &null),
            Some(c) => {
                let rows = c
                    .get(first_chain * dc..(first_chain + b) * dc)
                    .ok_or_else(|| {
                        InterpolantError::Shape("fewer conditions than chains".into())
                    })?;
                let cond = Conditioning {
                    features: Tensor::new(b, dc, rows.to_vec()),
                    keep: vec![true; b],
                };
                let vc = self.denoiser.velocity(x, t, &cond);
                if self.cfg.guidance_active(t) {
                    let vu = self.denoiser.velocity(x, t, &null);
                    cfg_velocity(&vc, &vu, t, &self.cfg)
                } else {
                    vc
                }
            }
        };
        out.copy_from_slice(&v);
        Ok(())
    }
}

/// Samples `n` latents and decodes them to images.
pub fn generate_images(
    vae: &ToyVae,
    denoiser: &DenoiserModel,
    conditions: Option<&[f64]>,
    cfg: &SamplerConfig,
    n: usize,
) -> Result<Vec<RasterImage>> {
    if let Some(c) = conditions {
        if c.len() != n * denoiser.shape.cond_dim {
            return Err(InterpolantError::Shape(format!(
                "{} condition values for {n} samples of dim {}",
                c.len(),
                denoiser.shape.cond_dim
            )));
        }
    }
    let field = ModelField {
        denoiser,
        conditions,
        cfg: *cfg,
    };
    let latents = sample(&field, cfg, n)?;
    let parts = par::map_chunks(&latents, 64 * LATENT_DIM, |_, chunk| {
        vae.decode_latents(chunk)
    });
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Pooled teacher features, `n x D_c` row-major.
pub fn teacher_features(teacher: &TeacherExtractor, images: &[RasterImage]) -> Result<Vec<f64>> {
    let parts = par::map_indexed(images.len(), |i| {
        teacher.extract(&images[i]).map(|(_, p)| p)
    });
    let mut out = Vec::with_capacity(images.len() * teacher.dim());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}
