use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{InterpolantError, Result};

/// A point on the linear path between data (`t = 0`) and noise (`t = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolantState {
    pub x_t: Vec<f64>,
    pub t: f64,
    /// Velocity target `eps - x0`.
    pub velocity: Vec<f64>,
}

fn check_t(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(InterpolantError::Time(t))
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(InterpolantError::Shape(format!(
            "lengths {a} and {b} differ"
        )))
    }
}

pub fn interpolate_forward(x0: &[f64], eps: &[f64], t: f64) -> Result<InterpolantState> {
    check_len(x0.len(), eps.len())?;
    check_t(t)?;
    Ok(InterpolantState {
        x_t: x0
            .iter()
            .zip(eps)
            .map(|(a, e)| (1.0 - t) * a + t * e)
            .collect(),
        t,
        velocity: x0.iter().zip(eps).map(|(a, e)| e - a).collect(),
    })
}

/// Diffusion coefficient `w(t)` of the reverse SDE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionSchedule {
    Zero,
    #[default]
    Linear,
    Bridge,
}

impl DiffusionSchedule {
    pub fn w(self, t: f64) -> f64 {
        match self {
            DiffusionSchedule::Zero => 0.0,
            DiffusionSchedule::Linear => t,
            DiffusionSchedule::Bridge => t * (1.0 - t),
        }
    }

    /// `w(t) / t`, the factor turning `eps_hat` into `-w(t) * score`. Finite at `t = 0`.
    #[inline]
    pub fn score_factor(self, t: f64) -> f64 {
        match self {
            DiffusionSchedule::Zero => 0.0,
            DiffusionSchedule::Linear => 1.0,
            DiffusionSchedule::Bridge => 1.0 - t,
        }
    }
}

impl fmt::Display for DiffusionSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiffusionSchedule::Zero => "zero",
            DiffusionSchedule::Linear => "linear",
            DiffusionSchedule::Bridge => "bridge",
        })
    }
}

impl FromStr for DiffusionSchedule {
    type Err = InterpolantError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" | "0" => Ok(Self::Zero),
            "linear" | "t" => Ok(Self::Linear),
            "bridge" | "t(1-t)" => Ok(Self::Bridge),
            _ => Err(InterpolantError::Config(format!(
                "unknown diffusion schedule {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub x0_hat: Vec<f64>,
    pub eps_hat: Vec<f64>,
    /// `w(t) * grad log p_t`.
    pub weighted_score: Vec<f64>,
}

pub fn velocity_to_estimates(
    x_t: &[f64],
    v: &[f64],
    t: f64,
    schedule: DiffusionSchedule,
) -> Result<Estimates> {
    check_len(x_t.len(), v.len())?;
    check_t(t)?;
    let eps_hat: Vec<f64> = x_t.iter().zip(v).map(|(x, v)| x + (1.0 - t) * v).collect();
    let f = schedule.score_factor(t);
    Ok(Estimates {
        x0_hat: x_t.iter().zip(v).map(|(x, v)| x - t * v).collect(),
        weighted_score: eps_hat.iter().map(|e| -f * e).collect(),
        eps_hat,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Ode,
    #[default]
    Sde,
}

impl FromStr for Scheme {
    type Err = InterpolantError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ode" => Ok(Scheme::Ode),
            "sde" => Ok(Scheme::Sde),
            _ => Err(InterpolantError::Config(format!("unknown scheme {s:?}"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Ode => "ode",
            Scheme::Sde => "sde",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub scheme: Scheme,
    pub steps: usize,
    pub cfg_scale: f64,
    pub guidance_low: f64,
    pub guidance_high: f64,
    pub diffusion: DiffusionSchedule,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Sde,
            steps: 250,
            cfg_scale: 2.5,
            guidance_low: 0.0,
            guidance_high: 0.75,
            diffusion: DiffusionSchedule::Linear,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let min_steps = if self.scheme == Scheme::Sde { 2 } else { 1 };
        if self.steps < min_steps {
            return Err(InterpolantError::Config(format!(
                "{} needs at least {min_steps} steps, got {}",
                self.scheme, self.steps
            )));
        }
        if !(0.0 <= self.guidance_low
            && self.guidance_low <= self.guidance_high
            && self.guidance_high <= 1.0)
        {
            return Err(InterpolantError::Config(format!(
                "guidance interval [{}, {}] must satisfy 0 <= low <= high <= 1",
                self.guidance_low, self.guidance_high
            )));
        }
        if !self.cfg_scale.is_finite() {
            return Err(InterpolantError::Config("cfg_scale must be finite".into()));
        }
        Ok(())
    }

    /// Whether guidance changes the velocity at time `t`.
    pub fn guidance_active(&self, t: f64) -> bool {
        self.cfg_scale != 1.0 && t >= self.guidance_low && t <= self.guidance_high
    }
}

/// Classifier-free guidance, active only on `[guidance_low, guidance_high]`.
pub fn cfg_velocity(v_cond: &[f64], v_uncond: &[f64], t: f64, cfg: &SamplerConfig) -> Vec<f64> {
    if !cfg.guidance_active(t) {
        return v_cond.to_vec();
    }
    v_cond
        .iter()
        .zip(v_uncond)
        .map(|(c, u)| u + cfg.cfg_scale * (c - u))
        .collect()
}

pub fn interpolate_condition(c1: &[f64], c2: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_len(c1.len(), c2.len())?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(InterpolantError::Config(format!(
            "interpolation factor {lambda} outside [0, 1]"
        )));
    }
    Ok(c1
        .iter()
        .zip(c2)
        .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn forward_examples() {
        let s = interpolate_forward(&[0.0], &[1.0], 0.25).unwrap();
        assert_eq!((s.x_t[0], s.velocity[0]), (0.25, 1.0));
        assert_eq!(
            interpolate_forward(&[3.0], &[-2.0], 0.0).unwrap().x_t,
            vec![3.0]
        );
        assert_eq!(
            interpolate_forward(&[3.0], &[-2.0], 1.0).unwrap().x_t,
            vec![-2.0]
        );
        assert!(interpolate_forward(&[1.0, 2.0], &[1.0], 0.5).is_err());
        assert!(interpolate_forward(&[1.0], &[1.0], 1.5).is_err());
    }

    #[test]
    fn estimate_examples() {
        let e = velocity_to_estimates(&[0.25], &[1.0], 0.25, DiffusionSchedule::Linear).unwrap();
        assert_eq!((e.x0_hat[0], e.eps_hat[0]), (0.0, 1.0));
        assert_eq!(e.weighted_score[0], -1.0);
        let at0 = velocity_to_estimates(&[0.7], &[2.0], 0.0, DiffusionSchedule::Linear).unwrap();
        assert_eq!(at0.x0_hat[0], 0.7);
        assert!(at0.weighted_score[0].is_finite());
        let at1 = velocity_to_estimates(&[0.7], &[2.0], 1.0, DiffusionSchedule::Bridge).unwrap();
        assert_eq!(at1.eps_hat[0], 0.7);
        assert_eq!(at1.weighted_score[0], 0.0);
    }

    #[test]
    fn schedules() {
        for s in [
            DiffusionSchedule::Zero,
            DiffusionSchedule::Linear,
            DiffusionSchedule::Bridge,
        ] {
            for t in [0.1, 0.5, 0.9] {
                assert!((s.score_factor(t) * t - s.w(t)).abs() < 1e-15);
            }
            assert_eq!(s.to_string().parse::<DiffusionSchedule>().unwrap(), s);
        }
    }

    #[test]
    fn guidance_examples() {
        let cfg = SamplerConfig::default();
        assert_eq!(cfg_velocity(&[2.0], &[1.0], 0.5, &cfg), vec![3.5]);
        assert_eq!(cfg_velocity(&[2.0], &[1.0], 0.9, &cfg), vec![2.0]);
        assert_eq!(cfg_velocity(&[2.0], &[1.0], 0.75, &cfg), vec![3.5]);
        let one = SamplerConfig {
            cfg_scale: 1.0,
            ..cfg
        };
        for t in [0.0, 0.3, 0.75, 1.0] {
            assert_eq!(
                cfg_velocity(&[0.1, -7.3], &[9.0, 1e9], t, &one),
                vec![0.1, -7.3]
            );
        }
        assert_eq!(cfg_velocity(&[1.25], &[1.25], 0.2, &cfg), vec![1.25]);
    }

    #[test]
    fn sampler_config_validation() {
        assert!(SamplerConfig::default().validate().is_ok());
        let c = SamplerConfig {
            scheme: Scheme::Sde,
            steps: 1,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = SamplerConfig {
            scheme: Scheme::Ode,
            steps: 1,
            ..Default::default()
        };
        assert!(c.validate().is_ok());
        let c = SamplerConfig {
            guidance_low: 0.8,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn condition_interpolation() {
        let (z, o) = (vec![0.0; 3], vec![1.0; 3]);
        for l in [0.2, 0.4, 0.6, 0.8] {
            let c = interpolate_condition(&z, &o, l).unwrap();
            assert!(c.iter().all(|&v| (v - l).abs() < 1e-15));
        }
        assert_eq!(
            interpolate_condition(&[1.0, 2.0], &[5.0, 6.0], 0.0).unwrap(),
            vec![1.0, 2.0]
        );
        assert_eq!(
            interpolate_condition(&[1.0, 2.0], &[5.0, 6.0], 1.0).unwrap(),
            vec![5.0, 6.0]
        );
        assert_eq!(
            interpolate_condition(&[0.3], &[0.3], 0.37).unwrap(),
            vec![0.3]
        );
        assert!(interpolate_condition(&[1.0], &[1.0, 2.0], 0.5).is_err());
    }

    proptest! {
        #[test]
        fn estimates_invert_forward(
            x0 in proptest::collection::vec(-5.0f64..5.0, 1..16),
            seed in 0u64..1000,
            t in 0.0f64..=1.0,
        ) {
            let eps: Vec<f64> = x0.iter().enumerate().map(|(i, v)| ((seed + i as u64) as f64).sin() * 2.0 - v * 0.1).collect();
            let s = interpolate_forward(&x0, &eps, t).unwrap();
            let e = velocity_to_estimates(&s.x_t, &s.velocity, t, DiffusionSchedule::Linear).unwrap();
            for i in 0..x0.len() {
                prop_assert!((e.x0_hat[i] - x0[i]).abs() <= 1e-12);
                prop_assert!((e.eps_hat[i] - eps[i]).abs() <= 1e-12);
            }
        }
    }
}
