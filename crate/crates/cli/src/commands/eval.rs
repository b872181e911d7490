use genbench::datastore::{pair_by_id, PairedSets};
use genbench::metrics::{fit_gaussian, fld, frechet_distance, paired_cosine, precision_recall};
use genbench::{EmbeddingSet, MetricName, MetricReport};

use super::{load_embeddings, read_ids, tag};
use crate::config::{required, RunConfig};
use crate::error::{CliError, Result};
use crate::record::RunRecord;

/// Expands `pr` and checks the names.
pub fn parse_metrics(names: &[String]) -> Result<Vec<MetricName>> {
    let mut out = Vec::new();
    for n in names {
        let add: Vec<MetricName> = match n.as_str() {
            "pr" => vec![MetricName::Precision, MetricName::Recall],
            other => vec![other
                .parse()
                .map_err(|_| CliError::usage(format!("unknown metric {other:?}")))?],
        };
        for m in add {
            if !out.contains(&m) {
                out.push(m);
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::usage("no metrics requested"));
    }
    Ok(out)
}

pub fn check_extractors(sets: &[&EmbeddingSet], filter: Option<&str>) -> Result<()> {
    let want = filter.unwrap_or_else(|| sets[0].extractor_id());
    for s in sets {
        if s.extractor_id() != want {
            return Err(CliError::data(format!(
                "embedding file from extractor {:?}, expected {want:?}",
                s.extractor_id()
            )));
        }
    }
    Ok(())
}

pub fn run(cfg: &RunConfig, rec: &mut RunRecord) -> Result<()> {
    let e = &cfg.eval;
    let metrics = parse_metrics(&e.metrics)?;
    let ref_path = required(&e.reference, "eval.reference")?;
    let cand_path = required(&e.candidate, "eval.candidate")?;
    let reference = load_embeddings(ref_path)?;
    let candidate = load_embeddings(cand_path)?;
    check_extractors(&[&reference, &candidate], e.extractor_id.as_deref())?;
    let (rtag, ctag) = (tag(&reference, ref_path), tag(&candidate, cand_path));
    let seed = cfg.seed.unwrap_or_default();
    let report = |m: MetricName, v: f64| -> Result<MetricReport> {
        Ok(MetricReport::new(m, v, reference.extractor_id(), &rtag, &ctag)?.with_seed(seed))
    };

    let mut pr = None;
    for m in metrics {
        let r = match m {
            MetricName::Fd => report(
                m,
                frechet_distance(&fit_gaussian(&reference)?, &fit_gaussian(&candidate)?)?,
            )?,
            MetricName::Precision | MetricName::Recall => {
                if pr.is_none() {
                    pr = Some(precision_recall(&reference, &candidate, e.k)?);
                }
                let p = pr.as_ref().expect("computed");
                let v = if m == MetricName::Precision {
                    p.precision
                } else {
                    p.recall
                };
                report(m, v)?.with_extra("k", e.k as f64)
            }
            MetricName::Fld => {
                let test = load_embeddings(required(&e.fld_test, "eval.fld_test")?)?;
                check_extractors(&[&reference, &test], e.extractor_id.as_deref())?;
                report(m, fld(&candidate, &reference, &test)?)?
            }
            MetricName::CosineSim => {
                let paired = match (&e.reference_ids, &e.candidate_ids) {
                    (Some(ri), Some(ci)) => pair_by_id(
                        reference.clone(),
                        &read_ids(ri)?,
                        candidate.clone(),
                        &read_ids(ci)?,
                    )?,
                    (None, None) => {
                        if reference.rows() != candidate.rows() {
                            return Err(CliError::usage(
                                "cosine_sim without id files needs equally many reference and candidate rows",
                            ));
                        }
                        PairedSets::new(
                            reference.clone(),
                            candidate.clone(),
                            (0..candidate.rows()).collect(),
                        )?
                    }
                    _ => {
                        return Err(CliError::usage(
                            "give both eval.reference_ids and eval.candidate_ids",
                        ))
                    }
                };
                let c = paired_cosine(&paired)?;
                report(m, c.mean)?.with_extra("std", c.std)
            }
        };
        rec.report(&r);
    }
    Ok(())
}
