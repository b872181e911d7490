use rand::Rng;
use serde::{Deserialize, Serialize};

use super::models::{
    patchify, same_shapes, Conditioning, DenoiserModel, DenoiserShape, Depth, ParamStore,
    TeacherExtractor, ToyVae, LATENT_CHANNELS, LATENT_DIM, TOKENS,
};
use super::tape::{Tape, Tensor, Var};
use super::{InterpolantError, Result};
use crate::preprocess::RasterImage;
use crate::{par, rng};

/// Training configuration. Every field has a default; the text form is `key = value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub lambda_align: f64,
    pub p_drop: f64,
    pub ema_decay: f64,
    pub kl_beta: f64,
    pub recon_weight: f64,
    /// Keep the autoencoder fixed at its initialization.
    pub freeze_vae: bool,
    pub vae_hidden: usize,
    pub hidden: usize,
    pub blocks: usize,
    pub mlp_ratio: usize,
    pub time_freqs: usize,
    pub align_depth: usize,
    pub align_hidden: usize,
    pub teacher_dim: usize,
    pub teacher_seed: u64,
    pub dataset_size: usize,
    pub dataset_seed: u64,
    pub checkpoint_every: u64,
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 10_000,
            batch_size: 32,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: 1.0,
            lambda_align: 0.5,
            p_drop: 0.1,
            ema_decay: 0.9999,
            kl_beta: 1e-4,
            recon_weight: 1.0,
            freeze_vae: false,
            vae_hidden: 64,
            hidden: 32,
            blocks: 2,
            mlp_ratio: 2,
            time_freqs: 16,
            align_depth: 1,
            align_hidden: 32,
            teacher_dim: 16,
            teacher_seed: 7,
            dataset_size: 4096,
            dataset_seed: 1,
            checkpoint_every: 1000,
            log_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| InterpolantError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(InterpolantError::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.p_drop) {
            return bad(format!("p_drop {} outside [0, 1]", self.p_drop));
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return bad(format!("ema_decay {} outside [0, 1]", self.ema_decay));
        }
        for (name, v) in [
            ("lambda_align", self.lambda_align),
            ("kl_beta", self.kl_beta),
            ("recon_weight", self.recon_weight),
            ("grad_clip", self.grad_clip),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a non-negative number"));
            }
        }
        if self.blocks == 0 || !(1..=self.blocks).contains(&self.align_depth) {
            return bad(format!(
                "align_depth {} must be within 1..={}",
                self.align_depth, self.blocks
            ));
        }
        if self.time_freqs < 2 || !self.time_freqs.is_multiple_of(2) {
            return bad("time_freqs must be an even number >= 2".into());
        }
        if [
            self.vae_hidden,
            self.hidden,
            self.mlp_ratio,
            self.align_hidden,
            self.teacher_dim,
        ]
        .contains(&0)
        {
            return bad("model widths must be positive".into());
        }
        if self.dataset_size == 0 {
            return bad("dataset_size must be at least 1".into());
        }
        Ok(())
    }

    pub fn denoiser_shape(&self) -> DenoiserShape {
        DenoiserShape {
            hidden: self.hidden,
            blocks: self.blocks,
            mlp_ratio: self.mlp_ratio,
            time_freqs: self.time_freqs,
            cond_dim: self.teacher_dim,
            align_depth: self.align_depth,
            align_hidden: self.align_hidden,
        }
    }
}

/// Per-term losses of one step. `total` is the weighted sum that was differentiated.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub diffusion: f64,
    pub alignment: f64,
    pub reconstruction: f64,
    pub kl: f64,
    pub total: f64,
    /// Fraction of samples that saw their real condition rather than the null embedding.
    pub condition_usage: f64,
}

/// Random draws of one step, fixed so a step can be re-evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInputs {
    pub indices: Vec<usize>,
    pub t: Vec<f64>,
    pub noise: Vec<f64>,
    pub vae_noise: Vec<f64>,
    pub keep: Vec<bool>,
    /// Values used for the detached latents of the diffusion term instead of the encoder output.
    /// Lets finite differences hold the stop-gradient branch fixed.
    pub frozen_latents: Option<Vec<f64>>,
}

/// Gradients for both parameter groups, aligned with their stores.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub vae: Vec<Tensor>,
    pub denoiser: Vec<Tensor>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.vae
            .iter()
            .chain(&self.denoiser)
            .flat_map(|t| &t.data)
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

/// Adam moments for one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.rows, t.cols))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One bias-corrected Adam update at 1-based step `step`. Parameters and moments are
    /// rounded to `f32` afterwards so that a checkpoint holds the exact optimizer state.
    fn update(
        &mut self,
        params: &mut ParamStore,
        grads: &[Tensor],
        cfg: &TrainConfig,
        scale: f64,
        step: u64,
    ) {
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(step as i32);
        let c2 = 1.0 - b2.powi(step as i32);
        for (((p, g), m), v) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.data.len() {
                let gi = g.data[i] * scale;
                let mi = b1 * m.data[i] + (1.0 - b1) * gi;
                let vi = b2 * v.data[i] + (1.0 - b2) * gi * gi;
                let upd = cfg.learning_rate * (mi / c1) / ((vi / c2).sqrt() + cfg.adam_eps);
                m.data[i] = f64::from(mi as f32);
                v.data[i] = f64::from(vi as f32);
                p.data[i] = f64::from((p.data[i] - upd) as f32);
            }
        }
    }
}

/// Moving average of the autoencoder and denoiser parameters, one decay for both.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaShadow {
    pub decay: f64,
    pub vae: Vec<Tensor>,
    pub denoiser: Vec<Tensor>,
}

impl EmaShadow {
    pub fn new(decay: f64, vae: &ParamStore, denoiser: &ParamStore) -> Result<Self> {
        if !(0.0..=1.0).contains(&decay) {
            return Err(InterpolantError::Config(format!(
                "ema decay {decay} outside [0, 1]"
            )));
        }
        Ok(Self {
            decay,
            vae: vae.tensors().to_vec(),
            denoiser: denoiser.tensors().to_vec(),
        })
    }
}

/// `shadow <- decay * shadow + (1 - decay) * live`, elementwise for both groups.
pub fn ema_update(shadow: &mut EmaShadow, vae: &ParamStore, denoiser: &ParamStore) -> Result<()> {
    same_shapes(&shadow.vae, vae.tensors())?;
    same_shapes(&shadow.denoiser, denoiser.tensors())?;
    let d = shadow.decay;
    for (s, l) in shadow
        .vae
        .iter_mut()
        .zip(vae.tensors())
        .chain(shadow.denoiser.iter_mut().zip(denoiser.tensors()))
    {
        s.data
            .iter_mut()
            .zip(&l.data)
            .for_each(|(s, l)| *s = d * *s + (1.0 - d) * l);
    }
    Ok(())
}

/// Training images with their frozen teacher outputs.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub images: Vec<RasterImage>,
    /// `n x D_c` pooled features, the conditioning signal.
    pub pooled: Vec<f64>,
    /// `n x 16 x D_c` teacher tokens on the latent grid.
    pub tokens: Vec<f64>,
}

impl TrainData {
    pub fn new(images: Vec<RasterImage>, teacher: &TeacherExtractor) -> Result<Self> {
        if images.is_empty() {
            return Err(InterpolantError::Config("training set is empty".into()));
        }
        let outs = par::map_indexed(images.len(), |i| teacher.alignment_targets(&images[i]));
        let (mut pooled, mut tokens) = (Vec::new(), Vec::new());
        for o in outs {
            let (t, p) = o?;
            tokens.extend(t);
            pooled.extend(p);
        }
        Ok(Self {
            images,
            pooled,
            tokens,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Models, optimizer state and EMA for joint autoencoder + denoiser training.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub cfg: TrainConfig,
    pub vae: ToyVae,
    pub denoiser: DenoiserModel,
    pub teacher: TeacherExtractor,
    pub ema: EmaShadow,
    pub adam_vae: AdamState,
    pub adam_denoiser: AdamState,
    pub step: u64,
    pub data: TrainData,
}

fn check_term(value: f64, term: &'static str, step: u64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(InterpolantError::NonFiniteLoss { term, step })
    }
}

impl Trainer {
    /// Fresh models initialized from `cfg.seed`.
    pub fn new(cfg: TrainConfig, images: Vec<RasterImage>) -> Result<Self> {
        cfg.validate()?;
        let vae = ToyVae::new(cfg.vae_hidden, rng::mix(cfg.seed, 1));
        let denoiser = DenoiserModel::new(cfg.denoiser_shape(), rng::mix(cfg.seed, 2));
        let teacher = TeacherExtractor::new(cfg.teacher_dim, cfg.teacher_seed);
        let data = TrainData::new(images, &teacher)?;
        let ema = EmaShadow::new(cfg.ema_decay, &vae.params, &denoiser.params)?;
        Ok(Self {
            adam_vae: AdamState::new(&vae.params),
            adam_denoiser: AdamState::new(&denoiser.params),
            cfg,
            vae,
            denoiser,
            teacher,
            ema,
            step: 0,
            data,
        })
    }

    /// Random draws for step `step`, a pure function of `(cfg.seed, step)`.
    pub fn draw_inputs(&self, step: u64) -> StepInputs {
        let b = self.cfg.batch_size;
        let mut r = rng::stream(rng::mix(self.cfg.seed, 0x57e9), step);
        let indices = (0..b).map(|_| r.random_range(0..self.data.len())).collect();
        let t = (0..b).map(|_| r.random::<f64>()).collect();
        let keep = (0..b)
            .map(|_| r.random::<f64>() >= self.cfg.p_drop)
            .collect();
        let mut noise = vec![0.0; b * LATENT_DIM];
        let mut vae_noise = vec![0.0; b * LATENT_DIM];
        rng::fill_normal(&mut r, &mut noise);
        rng::fill_normal(&mut r, &mut vae_noise);
        StepInputs {
            indices,
            t,
            noise,
            vae_noise,
            keep,
            frozen_latents: None,
        }
    }

    /// Losses and, when `want_grads`, gradients for fixed inputs. Parameters are not modified.
    pub fn evaluate(
        &self,
        inp: &StepInputs,
        want_grads: bool,
    ) -> Result<(LossBreakdown, Option<Gradients>)> {
        let cfg = &self.cfg;
        let b = inp.indices.len();
        let dc = cfg.teacher_dim;
        let train_vae = !cfg.freeze_vae;
        let mut tape = Tape::new();
        let pv = self.vae.params.bind(&mut tape, want_grads && train_vae);
        let pd = self.denoiser.params.bind(&mut tape, want_grads);

        let imgs: Vec<&RasterImage> = inp.indices.iter().map(|&i| &self.data.images[i]).collect();
        let patches = tape.constant(patchify(&imgs)?);
        let enc = self.vae.encode(&mut tape, &pv, patches);
        let half = tape.scale(enc.log_var, 0.5);
        let std = tape.exp(half);
        let eps_vae = tape.constant(Tensor::new(
            b * TOKENS,
            LATENT_CHANNELS,
            inp.vae_noise.clone(),
        ));
        let spread = tape.mul(std, eps_vae);
        let z = tape.add(enc.mean, spread);

        // per-token row scale and additive noise part of x_t
        let row_t: Vec<f64> = inp
            .t
            .iter()
            .flat_map(|&t| std::iter::repeat_n(t, TOKENS))
            .collect();
        let t_eps: Vec<f64> = inp
            .noise
            .iter()
            .enumerate()
            .map(|(i, e)| row_t[i / LATENT_CHANNELS] * e)
            .collect();

        let mut features = Vec::with_capacity(b * dc);
        for &i in &inp.indices {
            features.extend_from_slice(&self.data.pooled[i * dc..(i + 1) * dc]);
        }
        let cond = Conditioning {
            features: Tensor::new(b, dc, features),
            keep: inp.keep.clone(),
        };

        // diffusion term: latents detached, so it only reaches the denoiser
        let x0 = match &inp.frozen_latents {
            Some(f) if f.len() == b * LATENT_DIM => f.clone(),
            Some(f) => {
                return Err(InterpolantError::Shape(format!(
                    "{} frozen latents for batch {b}",
                    f.len()
                )))
            }
            None => tape.value(z).data.clone(),
        };
        let x_t: Vec<f64> = x0
            .iter()
            .enumerate()
            .map(|(i, x)| (1.0 - row_t[i / LATENT_CHANNELS]) * x + t_eps[i])
            .collect();
        let target: Vec<f64> = inp.noise.iter().zip(&x0).map(|(e, x)| e - x).collect();
        let xt = tape.constant(Tensor::new(b * TOKENS, LATENT_CHANNELS, x_t));
        let out = self
            .denoiser
            .forward(&mut tape, &pd, xt, &inp.t, &cond, Depth::Full);
        let vt = tape.constant(Tensor::new(b * TOKENS, LATENT_CHANNELS, target));
        let mse = tape.mse(out.velocity.expect("full depth"), vt);
        let mut terms: Vec<(Var, f64)> = vec![(mse, 1.0)];

        // alignment term: x_t rebuilt from the live latents, reaching encoder and denoiser
        let mut align = None;
        if cfg.lambda_align > 0.0 {
            let scaled = tape.scale_rows(z, row_t.iter().map(|t| 1.0 - t).collect());
            let noise_part = tape.constant(Tensor::new(b * TOKENS, LATENT_CHANNELS, t_eps));
            let xt2 = tape.add(scaled, noise_part);
            let out2 = self
                .denoiser
                .forward(&mut tape, &pd, xt2, &inp.t, &cond, Depth::AlignOnly);
            let mut teacher = Vec::with_capacity(b * TOKENS * dc);
            for &i in &inp.indices {
                teacher
                    .extend_from_slice(&self.data.tokens[i * TOKENS * dc..(i + 1) * TOKENS * dc]);
            }
            let l = tape.cosine_loss(
                out2.align.expect("align head"),
                &Tensor::new(b * TOKENS, dc, teacher),
            )?;
            terms.push((l, cfg.lambda_align));
            align = Some(l);
        }

        let (mut recon, mut kl) = (None, None);
        if train_vae && cfg.recon_weight > 0.0 {
            let dec = self.vae.decode(&mut tape, &pv, z);
            let l = tape.mse(dec, patches);
            terms.push((l, cfg.recon_weight));
            recon = Some(l);
        }
        if train_vae && cfg.kl_beta > 0.0 {
            // mean over latent elements of (mu^2 + e^lv - lv - 1) / 2
            let m2 = tape.mul(enc.mean, enc.mean);
            let ev = tape.exp(enc.log_var);
            let s = tape.add(m2, ev);
            let s = tape.sub(s, enc.log_var);
            let ones = tape.constant(Tensor::new(
                b * TOKENS,
                LATENT_CHANNELS,
                vec![1.0; b * LATENT_DIM],
            ));
            let s = tape.sub(s, ones);
            let s = tape.scale(s, 0.5);
            let l = tape.mean(s);
            terms.push((l, cfg.kl_beta));
            kl = Some(l);
        }

        let step = self.step;
        let val = |tape: &Tape, v: Option<Var>| v.map_or(0.0, |v| tape.value(v).scalar());
        let diffusion = check_term(tape.value(mse).scalar(), "diffusion", step)?;
        let alignment = check_term(val(&tape, align), "alignment", step)?;
        let reconstruction = check_term(val(&tape, recon), "reconstruction", step)?;
        let kl_v = check_term(val(&tape, kl), "kl", step)?;
        let total_var = tape.weighted_sum(&terms);
        let total = check_term(tape.value(total_var).scalar(), "total", step)?;
        let losses = LossBreakdown {
            diffusion,
            alignment,
            reconstruction,
            kl: kl_v,
            total,
            condition_usage: inp.keep.iter().filter(|&&k| k).count() as f64 / b as f64,
        };
        if !want_grads {
            return Ok((losses, None));
        }
        tape.backward(total_var);
        let collect = |vars: &[Var], store: &ParamStore| -> Vec<Tensor> {
            vars.iter()
                .zip(store.tensors())
                .map(|(v, p)| match tape.grad(*v) {
                    Some(g) => Tensor::new(p.rows, p.cols, g.to_vec()),
                    None => Tensor::zeros(p.rows, p.cols),
                })
                .collect()
        };
        let grads = Gradients {
            vae: collect(&pv, &self.vae.params),
            denoiser: collect(&pd, &self.denoiser.params),
        };
        Ok((losses, Some(grads)))
    }

    /// Reparameterized latents `z` for `inp`, `B x 64`.
    pub fn sampled_latents(&self, inp: &StepInputs) -> Result<Vec<f64>> {
        let imgs: Vec<&RasterImage> = inp.indices.iter().map(|&i| &self.data.images[i]).collect();
        let mut tape = Tape::new();
        let pv = self.vae.params.bind(&mut tape, false);
        let patches = tape.constant(patchify(&imgs)?);
        let enc = self.vae.encode(&mut tape, &pv, patches);
        let lv = &tape.value(enc.log_var).data;
        Ok(tape
            .value(enc.mean)
            .data
            .iter()
            .zip(lv)
            .zip(&inp.vae_noise)
            .map(|((m, l), e)| m + (0.5 * l).exp() * e)
            .collect())
    }

    /// One optimization step followed by the EMA update.
    pub fn train_step(&mut self) -> Result<LossBreakdown> {
        let inp = self.draw_inputs(self.step);
        let (losses, grads) = self.evaluate(&inp, true)?;
        let grads = grads.expect("requested");
        let norm = grads.norm();
        if !norm.is_finite() {
            return Err(InterpolantError::NonFiniteLoss {
                term: "gradient",
                step: self.step,
            });
        }
        let scale = if self.cfg.grad_clip > 0.0 && norm > self.cfg.grad_clip {
            self.cfg.grad_clip / norm
        } else {
            1.0
        };
        let t = self.step + 1;
        if !self.cfg.freeze_vae {
            self.adam_vae
                .update(&mut self.vae.params, &grads.vae, &self.cfg, scale, t);
        }
        self.adam_denoiser.update(
            &mut self.denoiser.params,
            &grads.denoiser,
            &self.cfg,
            scale,
            t,
        );
        ema_update(&mut self.ema, &self.vae.params, &self.denoiser.params)?;
        self.step = t;
        Ok(losses)
    }

    /// Autoencoder and denoiser carrying the EMA parameters.
    pub fn ema_models(&self) -> Result<(ToyVae, DenoiserModel)> {
        let mut vae = self.vae.clone();
        let mut den = self.denoiser.clone();
        vae.params.assign(&self.ema.vae)?;
        den.params.assign(&self.ema.denoiser)?;
        Ok((vae, den))
    }
}
