use std::io::{Read, Write};

use super::models::{DenoiserModel, ParamStore, TeacherExtractor, ToyVae};
use super::tape::Tensor;
use super::train::{AdamState, EmaShadow, TrainConfig, TrainData, Trainer};
use super::{InterpolantError, Result};
use crate::preprocess::RasterImage;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GBCKPT\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

const GROUPS: [&str; 4] = ["live", "ema", "adam_m", "adam_v"];

/// Named tensors of one parameter group, autoencoder first.
pub type TensorGroup = Vec<(String, Tensor)>;

/// Everything needed to resume training or to sample: config snapshot, step counter, live and
/// EMA parameters and the optimizer moments. Values are stored as little-endian `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub step: u64,
    pub live: TensorGroup,
    pub ema: TensorGroup,
    pub adam_m: TensorGroup,
    pub adam_v: TensorGroup,
}

fn err(msg: impl Into<String>) -> InterpolantError {
    InterpolantError::Checkpoint(msg.into())
}

fn named(store: &ParamStore, values: &[Tensor]) -> TensorGroup {
    store
        .names()
        .iter()
        .cloned()
        .zip(values.iter().cloned())
        .collect()
}

fn put_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| err("truncated"))?;
    Ok(u32::from_le_bytes(b))
}

fn get_str(r: &mut impl Read, limit: usize) -> Result<String> {
    let n = get_u32(r)? as usize;
    if n > limit {
        return Err(err(format!("string of {n} bytes exceeds limit")));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b).map_err(|_| err("truncated"))?;
    String::from_utf8(b).map_err(|_| err("invalid utf-8"))
}

impl Checkpoint {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        put_str(&mut w, &self.config.to_toml())?;
        w.write_all(&self.step.to_le_bytes())?;
        let groups = [&self.live, &self.ema, &self.adam_m, &self.adam_v];
        w.write_all(&(groups.len() as u32).to_le_bytes())?;
        for (name, group) in GROUPS.iter().zip(groups) {
            put_str(&mut w, name)?;
            w.write_all(&(group.len() as u32).to_le_bytes())?;
            for (tname, t) in group {
                put_str(&mut w, tname)?;
                w.write_all(&(t.rows as u32).to_le_bytes())?;
                w.write_all(&(t.cols as u32).to_le_bytes())?;
                let mut buf = Vec::with_capacity(t.data.len() * 4);
                for &v in &t.data {
                    buf.extend_from_slice(&(v as f32).to_le_bytes());
                }
                w.write_all(&buf)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| err("truncated"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(err("bad magic"));
        }
        let version = get_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(err(format!("unsupported version {version}")));
        }
        let config = TrainConfig::from_toml(&get_str(&mut r, 1 << 20)?)?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(|_| err("truncated"))?;
        let step = u64::from_le_bytes(b8);
        let ngroups = get_u32(&mut r)? as usize;
        if ngroups != GROUPS.len() {
            return Err(err(format!(
                "expected {} groups, found {ngroups}",
                GROUPS.len()
            )));
        }
        let mut groups = Vec::with_capacity(ngroups);
        for expect in GROUPS {
            let name = get_str(&mut r, 64)?;
            if name != expect {
                return Err(err(format!("expected group {expect:?}, found {name:?}")));
            }
            let n = get_u32(&mut r)? as usize;
            let mut group = Vec::with_capacity(n.min(4096));
            for _ in 0..n {
                let tname = get_str(&mut r, 256)?;
                let rows = get_u32(&mut r)? as usize;
                let cols = get_u32(&mut r)? as usize;
                let len = rows
                    .checked_mul(cols)
                    .filter(|&l| l <= 1 << 28)
                    .ok_or_else(|| err("tensor too large"))?;
                let mut buf = vec![0u8; len * 4];
                r.read_exact(&mut buf).map_err(|_| err("truncated"))?;
                let data = buf
                    .chunks_exact(4)
                    .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                    .collect();
                group.push((tname, Tensor::new(rows, cols, data)));
            }
            groups.push(group);
        }
        let mut it = groups.into_iter();
        let mut next = || it.next().expect("four groups");
        Ok(Self {
            config,
            step,
            live: next(),
            ema: next(),
            adam_m: next(),
            adam_v: next(),
        })
    }

    /// Splits a group into the autoencoder and denoiser parts, checked against fresh models.
    fn split(
        &self,
        group: &TensorGroup,
        vae: &ParamStore,
        den: &ParamStore,
    ) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
        let names: Vec<&String> = vae.names().iter().chain(den.names()).collect();
        if group.len() != names.len() || group.iter().zip(&names).any(|((n, _), m)| n != *m) {
            return Err(err(
                "parameter names do not match the configured architecture",
            ));
        }
        let mut tensors: Vec<Tensor> = group.iter().map(|(_, t)| t.clone()).collect();
        let den_part = tensors.split_off(vae.len());
        Ok((tensors, den_part))
    }

    /// Models rebuilt from the live or EMA group, plus the teacher regenerated from its seed.
    pub fn models(&self, ema: bool) -> Result<(ToyVae, DenoiserModel, TeacherExtractor)> {
        let cfg = &self.config;
        let mut vae = ToyVae::new(cfg.vae_hidden, 0);
        let mut den = DenoiserModel::new(cfg.denoiser_shape(), 0);
        let (v, d) = self.split(
            if ema { &self.ema } else { &self.live },
            &vae.params,
            &den.params,
        )?;
        vae.params.assign(&v)?;
        den.params.assign(&d)?;
        Ok((
            vae,
            den,
            TeacherExtractor::new(cfg.teacher_dim, cfg.teacher_seed),
        ))
    }
}

impl Trainer {
    pub fn checkpoint(&self) -> Checkpoint {
        let both = |v: &[Tensor], d: &[Tensor]| -> TensorGroup {
            let mut g = named(&self.vae.params, v);
            g.extend(named(&self.denoiser.params, d));
            g
        };
        Checkpoint {
            config: self.cfg.clone(),
            step: self.step,
            live: both(self.vae.params.tensors(), self.denoiser.params.tensors()),
            ema: both(&self.ema.vae, &self.ema.denoiser),
            adam_m: both(&self.adam_vae.m, &self.adam_denoiser.m),
            adam_v: both(&self.adam_vae.v, &self.adam_denoiser.v),
        }
    }

    /// Resumes from `ckpt` with the given training images.
    pub fn restore(ckpt: &Checkpoint, images: Vec<RasterImage>) -> Result<Self> {
        let (vae, denoiser, teacher) = ckpt.models(false)?;
        let (ev, ed) = ckpt.split(&ckpt.ema, &vae.params, &denoiser.params)?;
        let (mv, md) = ckpt.split(&ckpt.adam_m, &vae.params, &denoiser.params)?;
        let (vv, vd) = ckpt.split(&ckpt.adam_v, &vae.params, &denoiser.params)?;
        let data = TrainData::new(images, &teacher)?;
        Ok(Self {
            cfg: ckpt.config.clone(),
            ema: EmaShadow {
                decay: ckpt.config.ema_decay,
                vae: ev,
                denoiser: ed,
            },
            adam_vae: AdamState { m: mv, v: vv },
            adam_denoiser: AdamState { m: md, v: vd },
            vae,
            denoiser,
            teacher,
            step: ckpt.step,
            data,
        })
    }
}
