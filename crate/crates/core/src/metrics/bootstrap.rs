use rand::seq::index;

use super::cosine::mean_std;
use super::{MetricsError, Result};
use crate::datastore::EmbeddingSet;
use crate::{par, rng};

/// Subsampling protocol: `replicates` draws of `subsample_size` rows without replacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapSpec {
    pub subsample_size: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        Self {
            subsample_size: 50_000,
            replicates: 50,
            seed: 0,
        }
    }
}

impl BootstrapSpec {
    pub fn validate(&self, pool_rows: usize) -> Result<()> {
        if self.replicates == 0 {
            return Err(MetricsError::InvalidSpec(
                "replicates must be at least 1".into(),
            ));
        }
        if self.subsample_size == 0 || self.subsample_size > pool_rows {
            return Err(MetricsError::InvalidSpec(format!(
                "subsample size {} must be in 1..={pool_rows}",
                self.subsample_size
            )));
        }
        Ok(())
    }

    /// Sorted pool indices drawn for replicate `r`.
    pub fn replicate_indices(&self, pool_rows: usize, r: usize) -> Vec<usize> {
        let mut rng = rng::seeded(self.seed ^ r as u64);
        let mut idx = index::sample(&mut rng, pool_rows, self.subsample_size).into_vec();
        idx.sort_unstable();
        idx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOutcome {
    pub mean: f64,
    /// Population standard deviation of the replicate values.
    pub std: f64,
    pub replicate_values: Vec<f64>,
}

/// Evaluates `metric` on `spec.replicates` subsamples of `pool`.
///
/// The closure sees only the subsample; it is expected to compare against a fixed full
/// reference set captured by the caller.
pub fn bootstrap<F>(
    metric: F,
    pool: &EmbeddingSet,
    spec: &BootstrapSpec,
) -> Result<BootstrapOutcome>
where
    F: Fn(&EmbeddingSet) -> Result<f64> + Sync + Send,
{
    spec.validate(pool.rows())?;
    let results = par::map_indexed(spec.replicates, |r| {
        let idx = spec.replicate_indices(pool.rows(), r);
        let sub = pool.select_rows(&idx)?;
        metric(&sub)
    });
    let mut values = Vec::with_capacity(spec.replicates);
    for (index, res) in results.into_iter().enumerate() {
        match res {
            Ok(v) => values.push(v),
            Err(e) => {
                return Err(MetricsError::Replicate {
                    index,
                    source: Box::new(e),
                })
            }
        }
    }
    let (mean, std) = mean_std(&values);
    Ok(BootstrapOutcome {
        mean,
        std,
        replicate_values: values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{fit_gaussian, frechet_distance};

    fn pool(n: usize, dim: usize, seed: u64) -> EmbeddingSet {
        let mut r = rng::seeded(seed);
        let mut v = vec![0.0; n * dim];
        rng::fill_normal(&mut r, &mut v);
        EmbeddingSet::new(n, dim, v.iter().map(|&x| x as f32).collect(), "e", "pool").unwrap()
    }

    #[test]
    fn defaults() {
        let s = BootstrapSpec::default();
        assert_eq!((s.subsample_size, s.replicates), (50_000, 50));
    }

    #[test]
    fn full_pool_subsample_has_no_spread() {
        let p = pool(300, 3, 1);
        let reference = fit_gaussian(&pool(300, 3, 2)).unwrap();
        let spec = BootstrapSpec {
            subsample_size: 300,
            replicates: 7,
            seed: 4,
        };
        let out = bootstrap(
            |s| frechet_distance(&fit_gaussian(s)?, &reference),
            &p,
            &spec,
        )
        .unwrap();
        assert_eq!(out.std, 0.0);
        assert!(out.replicate_values.iter().all(|&v| v == out.mean));
    }

    #[test]
    fn constant_metric() {
        let p = pool(20, 2, 1);
        let spec = BootstrapSpec {
            subsample_size: 5,
            replicates: 9,
            seed: 0,
        };
        let out = bootstrap(|_| Ok(7.0), &p, &spec).unwrap();
        assert_eq!((out.mean, out.std), (7.0, 0.0));
    }

    #[test]
    fn invalid_specs_and_failures() {
        let p = pool(10, 2, 1);
        let bad = BootstrapSpec {
            subsample_size: 11,
            replicates: 1,
            seed: 0,
        };
        assert!(matches!(
            bootstrap(|_| Ok(0.0), &p, &bad),
            Err(MetricsError::InvalidSpec(_))
        ));
        let zero = BootstrapSpec {
            subsample_size: 5,
            replicates: 0,
            seed: 0,
        };
        assert!(matches!(
            bootstrap(|_| Ok(0.0), &p, &zero),
            Err(MetricsError::InvalidSpec(_))
        ));
        let spec = BootstrapSpec {
            subsample_size: 5,
            replicates: 4,
            seed: 0,
        };
        let err = bootstrap(|_| Err(MetricsError::EigenFailure), &p, &spec).unwrap_err();
        assert!(matches!(err, MetricsError::Replicate { index: 0, .. }));
    }

    #[test]
    fn replicate_draws_are_distinct_subsets() {
        let spec = BootstrapSpec {
            subsample_size: 10,
            replicates: 3,
            seed: 5,
        };
        let a = spec.replicate_indices(100, 0);
        let b = spec.replicate_indices(100, 1);
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_ne!(a, b);
        assert_eq!(a, spec.replicate_indices(100, 0));
    }
}
