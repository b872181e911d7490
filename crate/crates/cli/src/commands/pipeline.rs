use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use genbench::interpolant::{render_tile, SLIDE_SIDE};
use genbench::preprocess::{
    expand_tile_coords, pixel_hash, read_png, tile_path, write_png, JpegConfig, Transform,
};
use genbench::{par, RasterImage, Split, TileManifest, TileRecord};

use super::load_manifest;
use crate::config::{required, RunConfig};
use crate::error::{CliError, Result};
use crate::record::RunRecord;

/// A named pair of op chains.
pub struct Preset {
    pub name: &'static str,
    pub aliases: &'static [&'static str],
    pub guidance: &'static [&'static str],
    pub validation: &'static [&'static str],
    pub jpeg_val_out_only: bool,
}

/// Ablation configurations. The 256 px presets expect 256 px tiles (see `gen-data --expand 16`).
pub const PRESETS: &[Preset] = &[
    Preset {
        name: "224px + PNG images (all)",
        aliases: &["crop-only"],
        guidance: &["crop:224"],
        validation: &["crop:224"],
        jpeg_val_out_only: false,
    },
    Preset {
        name: "256px + PNG images (all)",
        aliases: &["png-all"],
        guidance: &["resize:224"],
        validation: &["resize:224"],
        jpeg_val_out_only: false,
    },
    Preset {
        name: "256px + JPEG val-out only",
        aliases: &["jpeg-val-out"],
        guidance: &["resize:224"],
        validation: &["jpeg:70", "resize:224"],
        jpeg_val_out_only: true,
    },
    Preset {
        name: "256px + JPEG images (all)",
        aliases: &["jpeg-all"],
        guidance: &["jpeg:70", "resize:224"],
        validation: &["jpeg:70", "resize:224"],
        jpeg_val_out_only: false,
    },
];

pub fn find_preset(name: &str) -> Result<&'static Preset> {
    PRESETS
        .iter()
        .find(|p| p.name == name || p.aliases.contains(&name))
        .ok_or_else(|| CliError::usage(format!("unknown preset {name:?}; try --list-presets")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    /// Re-render the tile from its slide with coordinates grown by this margin.
    Expand(i64),
    Apply(Transform),
}

impl Op {
    fn label(&self) -> String {
        match self {
            Op::Expand(m) => format!("expand{m}"),
            Op::Apply(t) => t.label(),
        }
    }
}

fn dims(arg: &str, op: &str) -> Result<(u32, u32)> {
    let bad = || CliError::usage(format!("bad size {arg:?} in op {op:?}"));
    let (w, h) = match arg.split_once('x') {
        Some((w, h)) => (w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?),
        None => {
            let s = arg.parse().map_err(|_| bad())?;
            (s, s)
        }
    };
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

/// Parses ops such as `crop:224`, `resize:224x224`, `jpeg`, `jpeg:70`, `expand:16`.
pub fn parse_ops(ops: &[String], jpeg: JpegConfig) -> Result<Vec<Op>> {
    let mut out = Vec::with_capacity(ops.len());
    for (i, op) in ops.iter().enumerate() {
        let (name, arg) = match op.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (op.as_str(), None),
        };
        let need = || arg.ok_or_else(|| CliError::usage(format!("op {op:?} needs an argument")));
        let parsed = match name {
            "crop" => {
                let (w, h) = dims(need()?, op)?;
                Op::Apply(Transform::CenterCrop(w, h))
            }
            "resize" => {
                let (w, h) = dims(need()?, op)?;
                Op::Apply(Transform::Resize(w, h))
            }
            "jpeg" => {
                let cfg = match arg {
                    None => jpeg,
                    Some(q) => {
                        let q: u8 = q
                            .parse()
                            .map_err(|_| CliError::usage(format!("bad quality in {op:?}")))?;
                        JpegConfig::new(q, jpeg.chroma_subsampling)?
                    }
                };
                Op::Apply(Transform::Jpeg(cfg))
            }
            "expand" => {
                if i != 0 {
                    return Err(CliError::usage("expand must be the first op"));
                }
                let m: i64 = need()?
                    .parse()
                    .map_err(|_| CliError::usage(format!("bad margin in {op:?}")))?;
                Op::Expand(m)
            }
            _ => return Err(CliError::usage(format!("unknown op {op:?}"))),
        };
        out.push(parsed);
    }
    Ok(out)
}

fn chain_label(ops: &[Op]) -> String {
    if ops.is_empty() {
        "none".into()
    } else {
        ops.iter().map(Op::label).collect::<Vec<_>>().join(",")
    }
}

fn process(rec: &TileRecord, src: &Path, dst: &Path, ops: &[Op]) -> Result<String> {
    let mut img: Option<RasterImage> = None;
    for op in ops {
        img = Some(match op {
            Op::Expand(m) => render_tile(&expand_tile_coords(rec, *m, (SLIDE_SIDE, SLIDE_SIDE))?)?,
            Op::Apply(t) => {
                let cur = match img {
                    Some(i) => i,
                    None => read_png(&tile_path(src, &rec.slide_id, &rec.tile_id))?,
                };
                t.apply(&cur)?
            }
        });
    }
    let img = match img {
        Some(i) => i,
        None => read_png(&tile_path(src, &rec.slide_id, &rec.tile_id))?,
    };
    let out = tile_path(dst, &rec.slide_id, &rec.tile_id);
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent)?;
    }
    write_png(&out, &img)?;
    Ok(format!(
        "{}\t{}\t{}",
        rec.tile_id,
        chain_label(ops),
        pixel_hash(&img)
    ))
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(cfg: &RunConfig, out: &Path, rec: &mut RunRecord) -> Result<()> {
    let p = &cfg.pipeline;
    let jpeg = cfg.jpeg.config()?;
    let (g_ops, v_ops, val_out_only) = match &p.preset {
        Some(name) => {
            let pr = find_preset(name)?;
            let owned = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>();
            (
                owned(pr.guidance),
                owned(pr.validation),
                pr.jpeg_val_out_only,
            )
        }
        None => (
            p.guidance_ops.clone(),
            p.validation_ops.clone(),
            p.jpeg_val_out_only,
        ),
    };
    if !(0.0..=1.0).contains(&p.max_failure_rate) {
        return Err(CliError::usage(
            "pipeline.max_failure_rate must lie in [0, 1]",
        ));
    }
    let guidance = parse_ops(&g_ops, jpeg)?;
    let validation = parse_ops(&v_ops, jpeg)?;
    let val_in: Vec<Op> = if val_out_only {
        validation
            .iter()
            .copied()
            .filter(|o| !matches!(o, Op::Apply(Transform::Jpeg(_))))
            .collect()
    } else {
        validation.clone()
    };
    let manifest = load_manifest(required(&p.manifest, "pipeline.manifest")?)?;
    let src = required(&p.tiles, "pipeline.tiles")?;
    fs::create_dir_all(out)?;
    if manifest.is_empty() {
        rec.warn("manifest has no tiles; nothing to do");
        return Ok(());
    }

    type Arm = (&'static str, fn(Split) -> bool);
    let arms: [Arm; 2] = [
        ("guidance", |s| !s.is_validation()),
        ("validation", Split::is_validation),
    ];
    let mut failures = Vec::new();
    let mut total = 0usize;
    for (arm, member) in arms {
        let entries: Vec<TileRecord> = manifest
            .entries
            .iter()
            .filter(|r| member(r.split))
            .cloned()
            .collect();
        if entries.is_empty() {
            continue;
        }
        total += entries.len();
        let dst = out.join(arm);
        fs::create_dir_all(&dst)?;
        let results = par::map_indexed(entries.len(), |i| {
            let r = &entries[i];
            let ops = match (arm, r.split) {
                ("guidance", _) => &guidance,
                (_, Split::ValOut) => &validation,
                _ => &val_in,
            };
            process(r, src, &dst, ops)
        });
        let mut log = Vec::with_capacity(entries.len());
        for (r, res) in entries.iter().zip(results) {
            match res {
                Ok(line) => log.push(line),
                Err(e) => failures.push(format!("{arm}\t{}\t{}", r.tile_id, e.message)),
            }
        }
        write_lines(&dst.join("transform.log"), &log)?;
        let sub = TileManifest::new(entries)?;
        let mut mf = BufWriter::new(File::create(dst.join(super::MANIFEST_FILE))?);
        genbench::datastore::write_manifest(&sub, &mut mf)?;
        mf.flush()?;
        rec.output(arm, arm);
    }
    write_lines(&out.join("failures.log"), &failures)?;
    if !failures.is_empty() {
        rec.warn(format!(
            "{} of {total} tiles failed; see failures.log",
            failures.len()
        ));
    }
    if failures.len() as f64 > p.max_failure_rate * total as f64 {
        return Err(CliError::data(format!(
            "{} of {total} tiles failed, above the {} limit; first: {}",
            failures.len(),
            p.max_failure_rate,
            failures[0]
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve_by_name_and_alias() {
        assert_eq!(
            find_preset("crop-only").unwrap().name,
            "224px + PNG images (all)"
        );
        for name in [
            "256px + PNG images (all)",
            "256px + JPEG val-out only",
            "256px + JPEG images (all)",
        ] {
            assert_eq!(find_preset(name).unwrap().name, name);
        }
        assert!(find_preset("nope").is_err());
        let vo = find_preset("256px + JPEG val-out only").unwrap();
        assert!(vo.jpeg_val_out_only && !vo.guidance.iter().any(|o| o.starts_with("jpeg")));
        let all = find_preset("256px + JPEG images (all)").unwrap();
        assert!(all.guidance.iter().any(|o| o.starts_with("jpeg")));
    }

    #[test]
    fn op_parsing() {
        let j = JpegConfig::default();
        let ops = parse_ops(
            &[
                "expand:16".into(),
                "crop:224x200".into(),
                "jpeg:70".into(),
                "resize:224".into(),
            ],
            j,
        )
        .unwrap();
        assert_eq!(ops[0], Op::Expand(16));
        assert_eq!(ops[1], Op::Apply(Transform::CenterCrop(224, 200)));
        assert!(matches!(ops[2], Op::Apply(Transform::Jpeg(c)) if c.quality == 70));
        assert_eq!(ops[3], Op::Apply(Transform::Resize(224, 224)));
        for bad in ["crop", "crop:0", "blur:3", "jpeg:300"] {
            assert!(parse_ops(&[bad.into()], j).is_err(), "{bad}");
        }
        assert!(parse_ops(&["crop:4".into(), "expand:2".into()], j).is_err());
    }
}
