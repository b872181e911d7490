use genbench::metrics::{
    bootstrap, fit_gaussian, fld, frechet_distance, precision_recall, BootstrapSpec,
};
use genbench::{EmbeddingSet, MetricName, MetricReport};

use super::eval::check_extractors;
use super::{load_embeddings, tag};
use crate::config::{required, RunConfig};
use crate::error::{CliError, Result};
use crate::record::RunRecord;

pub fn run(cfg: &RunConfig, rec: &mut RunRecord) -> Result<()> {
    let b = &cfg.bootstrap;
    let metric: MetricName = b
        .metric
        .parse()
        .map_err(|_| CliError::usage(format!("unknown metric {:?}", b.metric)))?;
    let pool_path = required(&b.pool, "bootstrap.pool")?;
    let ref_path = required(&b.reference, "bootstrap.reference")?;
    let pool = load_embeddings(pool_path)?;
    let reference = load_embeddings(ref_path)?;
    check_extractors(&[&reference, &pool], None)?;
    let spec = BootstrapSpec {
        subsample_size: b.subsample,
        replicates: b.replicates,
        seed: b.seed,
    };
    let outcome = match metric {
        MetricName::Fd => {
            let rs = fit_gaussian(&reference)?;
            bootstrap(
                |s: &EmbeddingSet| frechet_distance(&rs, &fit_gaussian(s)?),
                &pool,
                &spec,
            )?
        }
        MetricName::Precision => bootstrap(
            |s: &EmbeddingSet| Ok(precision_recall(&reference, s, b.k)?.precision),
            &pool,
            &spec,
        )?,
        MetricName::Recall => bootstrap(
            |s: &EmbeddingSet| Ok(precision_recall(&reference, s, b.k)?.recall),
            &pool,
            &spec,
        )?,
        MetricName::Fld => {
            let test = load_embeddings(required(&b.fld_test, "bootstrap.fld_test")?)?;
            bootstrap(|s: &EmbeddingSet| fld(s, &reference, &test), &pool, &spec)?
        }
        MetricName::CosineSim => {
            return Err(CliError::usage(
                "cosine_sim is paired and cannot be bootstrapped",
            ))
        }
    };
    let r = MetricReport::new(
        metric,
        outcome.mean,
        reference.extractor_id(),
        tag(&reference, ref_path),
        tag(&pool, pool_path),
    )?
    .with_seed(b.seed)
    .with_extra("std", outcome.std)
    .with_extra("subsample", b.subsample as f64)
    .with_extra("replicates", b.replicates as f64);
    rec.report(&r);
    Ok(())
}
