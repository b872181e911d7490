use rand_chacha::ChaCha8Rng;

use super::path::{SamplerConfig, Scheme};
use super::{InterpolantError, Result};
use crate::{par, rng};

/// Chains advanced together in one batched velocity call.
pub const CHAIN_CHUNK: usize = 64;

/// A (possibly learned) velocity field `v(x, t)` evaluated on a batch of chains.
pub trait VelocityField: Sync {
    fn dim(&self) -> usize;

    /// Writes velocities for the rows of `x`, which belong to chains `first_chain..`.
    fn velocity(&self, x: &[f64], t: f64, first_chain: usize, out: &mut [f64]) -> Result<()>;
}

/// `v = 0` everywhere.
pub struct ZeroField(pub usize);

impl VelocityField for ZeroField {
    fn dim(&self) -> usize {
        self.0
    }

    fn velocity(&self, _: &[f64], _: f64, _: usize, out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        Ok(())
    }
}

/// Exact velocity of the linear interpolant when the data are standard Gaussian.
pub struct GaussianField(pub usize);

impl GaussianField {
    pub fn coefficient(t: f64) -> f64 {
        (2.0 * t - 1.0) / ((1.0 - t).powi(2) + t * t)
    }
}

impl VelocityField for GaussianField {
    fn dim(&self) -> usize {
        self.0
    }

    fn velocity(&self, x: &[f64], t: f64, _: usize, out: &mut [f64]) -> Result<()> {
        let c = Self::coefficient(t);
        out.iter_mut().zip(x).for_each(|(o, v)| *o = c * v);
        Ok(())
    }
}

/// Time at the start of step `i`.
#[inline]
fn time(i: usize, steps: usize) -> f64 {
    1.0 - i as f64 / steps as f64
}

fn run_chunk<F: VelocityField + ?Sized>(
    field: &F,
    cfg: &SamplerConfig,
    stochastic: bool,
    first: usize,
    count: usize,
) -> Result<Vec<f64>> {
    let dim = field.dim();
    let mut rngs: Vec<ChaCha8Rng> = (first..first + count)
        .map(|c| rng::stream(cfg.seed, c as u64))
        .collect();
    let mut x = vec![0.0; count * dim];
    for (r, row) in rngs.iter_mut().zip(x.chunks_exact_mut(dim)) {
        rng::fill_normal(r, row);
    }
    let mut v = vec![0.0; count * dim];
    let mut z = vec![0.0; dim];
    let h = 1.0 / cfg.steps as f64;
    for i in 0..cfg.steps {
        let t = time(i, cfg.steps);
        field.velocity(&x, t, first, &mut v)?;
        let last = i + 1 == cfg.steps;
        if stochastic {
            let f = cfg.diffusion.score_factor(t);
            let noise = if last {
                0.0
            } else {
                (2.0 * h * cfg.diffusion.w(t)).sqrt()
            };
            for (c, (row, vrow)) in x.chunks_exact_mut(dim).zip(v.chunks_exact(dim)).enumerate() {
                if noise > 0.0 {
                    rng::fill_normal(&mut rngs[c], &mut z);
                }
                for ((xv, vv), zv) in row.iter_mut().zip(vrow).zip(&z) {
                    // weighted score = -f * eps_hat, eps_hat = x + (1 - t) v
                    let wscore = -f * (*xv + (1.0 - t) * vv);
                    *xv -= h * (vv - wscore);
                    if noise > 0.0 {
                        *xv += noise * zv;
                    }
                }
            }
        } else {
            x.iter_mut().zip(&v).for_each(|(xv, vv)| *xv -= h * vv);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(InterpolantError::NonFiniteState { step: i });
        }
    }
    Ok(x)
}

fn run<F: VelocityField + ?Sized>(
    field: &F,
    cfg: &SamplerConfig,
    n: usize,
    stochastic: bool,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let chunks = n.div_ceil(CHAIN_CHUNK);
    let parts = par::map_indexed(chunks, |ci| {
        let first = ci * CHAIN_CHUNK;
        run_chunk(field, cfg, stochastic, first, CHAIN_CHUNK.min(n - first))
    });
    let mut out = Vec::with_capacity(n * field.dim());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Deterministic Euler integration from `t = 1` to `t = 0`; `n` chains, row-major output.
pub fn sample_ode<F: VelocityField + ?Sized>(
    field: &F,
    cfg: &SamplerConfig,
    n: usize,
) -> Result<Vec<f64>> {
    let cfg = SamplerConfig {
        scheme: Scheme::Ode,
        ..*cfg
    };
    run(field, &cfg, n, false)
}

/// Euler-Maruyama on the reverse SDE with diffusion `cfg.diffusion`; last step noise-free.
pub fn sample_sde<F: VelocityField + ?Sized>(
    field: &F,
    cfg: &SamplerConfig,
    n: usize,
) -> Result<Vec<f64>> {
    let cfg = SamplerConfig {
        scheme: Scheme::Sde,
        ..*cfg
    };
    run(field, &cfg, n, true)
}

/// Dispatches on `cfg.scheme`.
pub fn sample<F: VelocityField + ?Sized>(
    field: &F,
    cfg: &SamplerConfig,
    n: usize,
) -> Result<Vec<f64>> {
    match cfg.scheme {
        Scheme::Ode => sample_ode(field, cfg, n),
        Scheme::Sde => sample_sde(field, cfg, n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpolant::path::DiffusionSchedule;

    fn cfg(steps: usize, diffusion: DiffusionSchedule) -> SamplerConfig {
        SamplerConfig {
            steps,
            diffusion,
            seed: 11,
            ..Default::default()
        }
    }

    fn noise(n: usize, dim: usize, seed: u64) -> Vec<f64> {
        (0..n)
            .flat_map(|c| {
                let mut r = rng::stream(seed, c as u64);
                let mut v = vec![0.0; dim];
                rng::fill_normal(&mut r, &mut v);
                v
            })
            .collect()
    }

    #[test]
    fn zero_field_returns_initial_noise() {
        let c = cfg(10, DiffusionSchedule::Linear);
        assert_eq!(
            sample_ode(&ZeroField(3), &c, 130).unwrap(),
            noise(130, 3, 11)
        );
    }

    #[test]
    fn single_ode_step() {
        let c = cfg(1, DiffusionSchedule::Linear);
        let x1 = noise(5, 2, 11);
        let out = sample_ode(&GaussianField(2), &c, 5).unwrap();
        // v(x, 1) = x, so x1 - v = 0
        let expect: Vec<f64> = x1
            .iter()
            .map(|x| x - GaussianField::coefficient(1.0) * x)
            .collect();
        assert_eq!(out, expect);
    }

    #[test]
    fn zero_diffusion_sde_is_the_ode() {
        let c = cfg(40, DiffusionSchedule::Zero);
        assert_eq!(
            sample_sde(&GaussianField(4), &c, 200).unwrap(),
            sample_ode(&GaussianField(4), &c, 200).unwrap()
        );
    }

    #[test]
    fn sde_is_reproducible_and_thread_independent() {
        let c = cfg(30, DiffusionSchedule::Linear);
        let a = par::with_threads(Some(1), || sample_sde(&GaussianField(2), &c, 300).unwrap());
        let b = par::with_threads(Some(4), || sample_sde(&GaussianField(2), &c, 300).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn sde_needs_two_steps() {
        assert!(sample_sde(&ZeroField(1), &cfg(1, DiffusionSchedule::Linear), 2).is_err());
    }

    struct Exploding;
    impl VelocityField for Exploding {
        fn dim(&self) -> usize {
            1
        }
        fn velocity(&self, _: &[f64], t: f64, _: usize, out: &mut [f64]) -> Result<()> {
            out.fill(if t < 0.6 { f64::INFINITY } else { 0.0 });
            Ok(())
        }
    }

    #[test]
    fn non_finite_state_reports_step() {
        match sample_ode(&Exploding, &cfg(10, DiffusionSchedule::Linear), 3) {
            Err(InterpolantError::NonFiniteState { step }) => assert_eq!(step, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gaussian_marginals_small() {
        for d in [
            DiffusionSchedule::Zero,
            DiffusionSchedule::Linear,
            DiffusionSchedule::Bridge,
        ] {
            let out = sample_sde(&GaussianField(1), &cfg(100, d), 4000).unwrap();
            let mean = out.iter().sum::<f64>() / out.len() as f64;
            let var = out.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / out.len() as f64;
            assert!(
                mean.abs() < 0.08 && (0.85..1.15).contains(&var),
                "{d}: {mean} {var}"
            );
        }
    }
}
