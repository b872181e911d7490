//! Feature likelihood divergence.
//!
//! The candidate set is turned into a mixture of isotropic Gaussians, one per row, with
//! per-component variances fitted to a held-in real split. The score is the per-dimension gap in
//! test negative log-likelihood between that mixture and a self-calibration mixture built from
//! the held-in real rows with the same procedure. Memorized rows collapse their component
//! variance to the floor and are punished on the test split.

use std::f64::consts::PI;

use super::knn::squared_distance;
use super::{same_dim, MetricsError, Result};
use crate::datastore::EmbeddingSet;
use crate::par;

const ROW_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FldConfig {
    pub steps: usize,
    pub step_size: f64,
    pub variance_floor: f64,
}

impl Default for FldConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            step_size: 0.5,
            variance_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FldOutcome {
    pub value: f64,
    /// Mean test NLL under the candidate mixture.
    pub nll_candidate: f64,
    /// Mean test NLL under the self-calibration mixture.
    pub nll_calibration: f64,
}

/// Running log-sum-exp.
#[derive(Clone, Copy)]
struct StreamingLse {
    max: f64,
    sum: f64,
}

impl StreamingLse {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    #[inline]
    fn push(&mut self, v: f64) {
        if v > self.max {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.sum += (v - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

struct Mixture<'a> {
    centers: &'a [f64],
    dim: usize,
    log_var: Vec<f64>,
}

impl Mixture<'_> {
    fn components(&self) -> usize {
        self.log_var.len()
    }

    #[inline]
    fn log_component(&self, j: usize, sq: f64) -> f64 {
        let d = self.dim as f64;
        -0.5 * d * ((2.0 * PI).ln() + self.log_var[j]) - sq / (2.0 * self.log_var[j].exp())
    }

    /// Mean negative log-likelihood of `points` under the uniform mixture.
    fn mean_nll(&self, points: &[f64]) -> f64 {
        let dim = self.dim;
        let m = self.components();
        let log_m = (m as f64).ln();
        let partial = par::map_chunks(points, ROW_CHUNK * dim, |_, chunk| {
            chunk
                .chunks_exact(dim)
                .map(|x| {
                    let mut lse = StreamingLse::new();
                    for j in 0..m {
                        let sq = squared_distance(x, &self.centers[j * dim..(j + 1) * dim]);
                        lse.push(self.log_component(j, sq));
                    }
                    -(lse.value() - log_m)
                })
                .sum::<f64>()
        });
        partial.iter().sum::<f64>() / (points.len() / dim) as f64
    }
}

/// Fits per-component log-variances by gradient ascent on the mean log-likelihood of `target`.
fn fit<'a>(
    centers: &'a [f64],
    target: &[f64],
    dim: usize,
    self_target: bool,
    cfg: &FldConfig,
) -> Result<Mixture<'a>> {
    let m = centers.len() / dim;
    let n = target.len() / dim;
    // Distances are reused by every gradient step: n x m, row-major by target point.
    let sq: Vec<f64> = par::map_chunks(target, ROW_CHUNK * dim, |_, chunk| {
        chunk
            .chunks_exact(dim)
            .flat_map(|x| {
                (0..m).map(move |j| squared_distance(x, &centers[j * dim..(j + 1) * dim]))
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();

    // Initial variance: squared distance to the nearest target row (another row when the
    // centers are the target itself).
    let mut log_var = vec![0.0; m];
    for (j, lv) in log_var.iter_mut().enumerate() {
        let nearest = (0..n)
            .filter(|&i| !(self_target && i == j))
            .map(|i| sq[i * m + j])
            .fold(f64::INFINITY, f64::min);
        *lv = nearest.max(cfg.variance_floor).ln();
    }
    let mut mix = Mixture {
        centers,
        dim,
        log_var,
    };

    let d = dim as f64;
    for _ in 0..cfg.steps {
        let mix_ref = &mix;
        let partial = par::map_chunks(&sq, ROW_CHUNK * m, |_, rows| {
            let mut grad = vec![0.0; m];
            let mut logs = vec![0.0; m];
            for row in rows.chunks_exact(m) {
                let mut lse = StreamingLse::new();
                for j in 0..m {
                    logs[j] = mix_ref.log_component(j, row[j]);
                    lse.push(logs[j]);
                }
                let total = lse.value();
                for j in 0..m {
                    let resp = (logs[j] - total).exp();
                    grad[j] += resp * (-0.5 * d + row[j] / (2.0 * mix_ref.log_var[j].exp()));
                }
            }
            grad
        });
        let mut grad = vec![0.0; m];
        for g in &partial {
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
        for (lv, g) in mix.log_var.iter_mut().zip(&grad) {
            *lv += cfg.step_size * g / n as f64;
        }
        if mix.log_var.iter().any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite("FLD log-variance".into()));
        }
    }
    Ok(mix)
}

pub fn fld_detailed(
    gen: &EmbeddingSet,
    real_fit: &EmbeddingSet,
    real_test: &EmbeddingSet,
    cfg: &FldConfig,
) -> Result<FldOutcome> {
    same_dim(gen, real_fit)?;
    same_dim(gen, real_test)?;
    for s in [gen, real_fit, real_test] {
        if s.rows() < 2 {
            return Err(MetricsError::TooFewRows {
                need: 2,
                got: s.rows(),
            });
        }
    }
    let dim = gen.dim();
    let g = gen.to_f64();
    let fit_rows = real_fit.to_f64();
    let test = real_test.to_f64();

    let candidate = fit(&g, &fit_rows, dim, false, cfg)?;
    let calibration = fit(&fit_rows, &fit_rows, dim, true, cfg)?;
    let nll_candidate = candidate.mean_nll(&test);
    let nll_calibration = calibration.mean_nll(&test);
    let value = (nll_candidate - nll_calibration) / dim as f64;
    if !value.is_finite() {
        return Err(MetricsError::NonFinite("FLD likelihood".into()));
    }
    Ok(FldOutcome {
        value,
        nll_candidate,
        nll_calibration,
    })
}

/// FLD with the default optimization budget. Lower is better; a perfect generator scores near 0.
pub fn fld(gen: &EmbeddingSet, real_fit: &EmbeddingSet, real_test: &EmbeddingSet) -> Result<f64> {
    fld_detailed(gen, real_fit, real_test, &FldConfig::default()).map(|o| o.value)
}
