use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use genbench::interpolant::{
    generate_images, interpolate_condition, teacher_features, SamplerConfig,
};
use genbench::preprocess::{pixel_hash, write_png};
use genbench::EmbeddingSet;

use super::train::read_checkpoint;
use super::{load_embeddings, rows_f64, save_embeddings, write_ids, TOY_EXTRACTOR};
use crate::config::{required, RunConfig};
use crate::error::{CliError, Result};
use crate::record::RunRecord;

pub const SAMPLES_FILE: &str = "samples.tsv";
pub const CONDITIONS_FILE: &str = "conditions.tsv";

/// One batch of samples sharing a label and a way of building conditions.
struct SampleSet {
    label: String,
    lambda: Option<f64>,
    /// `n x D_c` rows, or `None` for unconditional sampling.
    conditions: Option<Vec<f64>>,
    /// Source row of each sample's condition.
    rows: Vec<Option<usize>>,
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn run(cfg: &RunConfig, out: &Path, rec: &mut RunRecord) -> Result<()> {
    let s = &cfg.sample;
    if s.n == 0 {
        return Err(CliError::usage("sample.n must be at least 1"));
    }
    let ckpt = read_checkpoint(required(&s.checkpoint, "sample.checkpoint")?)?;
    let (vae, den, teacher) = ckpt.models(s.ema)?;
    let dc = den.shape.cond_dim;

    let bank = match &s.conditions {
        None => None,
        Some(p) => {
            let set = load_embeddings(p)?;
            if set.dim() != dc {
                return Err(CliError::data(format!(
                    "condition file has dim {}, checkpoint expects {dc}",
                    set.dim()
                )));
            }
            if set.rows() == 0 {
                return Err(CliError::data("condition file has no rows"));
            }
            Some(set)
        }
    };

    let mut sets = Vec::new();
    match (s.anchors, &bank) {
        (Some(_), None) => return Err(CliError::usage("sample.anchors needs a conditions file")),
        (Some([a, b]), Some(bank)) => {
            if a >= bank.rows() || b >= bank.rows() {
                return Err(CliError::usage(format!(
                    "anchor rows {a}, {b} out of range for {} conditions",
                    bank.rows()
                )));
            }
            if s.lambdas.is_empty() {
                return Err(CliError::usage("sample.anchors needs at least one lambda"));
            }
            let (ca, cb) = (bank.row(a), bank.row(b));
            let ca: Vec<f64> = ca.iter().map(|&x| f64::from(x)).collect();
            let cb: Vec<f64> = cb.iter().map(|&x| f64::from(x)).collect();
            for &l in &s.lambdas {
                let c = interpolate_condition(&ca, &cb, l)
                    .map_err(|e| CliError::usage(e.to_string()))?;
                sets.push(SampleSet {
                    label: format!("lambda_{l}"),
                    lambda: Some(l),
                    conditions: Some(c.repeat(s.n)),
                    rows: vec![None; s.n],
                });
            }
        }
        (None, Some(bank)) => {
            let rows: Vec<usize> = (0..s.n).map(|i| i % bank.rows()).collect();
            let c = rows
                .iter()
                .flat_map(|&r| bank.row(r).iter().map(|&x| f64::from(x)))
                .collect();
            sets.push(SampleSet {
                label: "conditional".into(),
                lambda: None,
                conditions: Some(c),
                rows: rows.into_iter().map(Some).collect(),
            });
        }
        (None, None) => sets.push(SampleSet {
            label: "unconditional".into(),
            lambda: None,
            conditions: None,
            rows: vec![None; s.n],
        }),
    }

    let sweep = if s.steps.is_empty() {
        vec![cfg.sampler.steps]
    } else {
        s.steps.clone()
    };
    fs::create_dir_all(out)?;
    let mut samples = BufWriter::new(File::create(out.join(SAMPLES_FILE))?);
    writeln!(
        samples,
        "sample_id\tlabel\tsteps\tcondition_row\tlambda\tsha256"
    )?;
    let mut conds = BufWriter::new(File::create(out.join(CONDITIONS_FILE))?);
    writeln!(conds, "label\tlambda\tcondition")?;
    for set in &sets {
        if let (Some(l), Some(c)) = (set.lambda, &set.conditions) {
            writeln!(conds, "{}\t{l}\t{}", set.label, fmt_vec(&c[..dc]))?;
        }
        for &steps in &sweep {
            let sc = SamplerConfig {
                steps,
                ..cfg.sampler
            };
            sc.validate()?;
            let images = generate_images(&vae, &den, set.conditions.as_deref(), &sc, s.n)?;
            let rel = Path::new(&set.label).join(format!("steps_{steps}"));
            let dir = out.join(&rel);
            fs::create_dir_all(&dir)?;
            let mut ids = Vec::with_capacity(images.len());
            for (i, img) in images.iter().enumerate() {
                let id = format!("{}-s{steps}-{i:06}", set.label);
                write_png(&dir.join(format!("{id}.png")), img)?;
                let row = set.rows[i].map_or_else(|| "-".into(), |r| r.to_string());
                let lambda = set.lambda.map_or_else(|| "-".into(), |l| l.to_string());
                writeln!(
                    samples,
                    "{id}\t{}\t{steps}\t{row}\t{lambda}\t{}",
                    set.label,
                    pixel_hash(img)
                )?;
                ids.push(id);
            }
            let feats = teacher_features(&teacher, &images)?;
            let emb = EmbeddingSet::from_rows_f64(
                &rows_f64(&feats, teacher.dim()),
                TOY_EXTRACTOR,
                format!("{}-s{steps}", set.label),
            )?;
            save_embeddings(&dir.join("features.emb"), &emb)?;
            write_ids(&dir.join("features.ids"), &ids)?;
            rec.output(&format!("{}/steps_{steps}", set.label), rel);
        }
    }
    samples.flush()?;
    conds.flush()?;
    rec.output("samples", SAMPLES_FILE);
    Ok(())
}
