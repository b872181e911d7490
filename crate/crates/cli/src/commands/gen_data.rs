use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use genbench::datastore::write_manifest;
use genbench::interpolant::{
    render_tile, teacher_features, toy_manifest, TeacherExtractor, ToyDatasetConfig, SLIDE_SIDE,
};
use genbench::preprocess::{expand_tile_coords, pixel_hash, tile_path, write_png};
use genbench::{par, EmbeddingSet, TileManifest};

use super::{rows_f64, save_embeddings, write_ids, MANIFEST_FILE, TOY_EXTRACTOR};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::record::RunRecord;

pub fn run(cfg: &RunConfig, out: &Path, rec: &mut RunRecord) -> Result<()> {
    let g = &cfg.gen_data;
    let toy = ToyDatasetConfig {
        proportions: g.proportions.clone(),
        slides_per_group: g.slides_per_group,
        tile: g.tile,
        ..Default::default()
    };
    let mut manifest = toy_manifest(g.n, g.seed, &toy)?;
    if g.expand > 0 {
        let entries = manifest
            .entries
            .iter()
            .map(|r| expand_tile_coords(r, i64::from(g.expand), (SLIDE_SIDE, SLIDE_SIDE)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        manifest = TileManifest::new(entries)?;
    }
    std::fs::create_dir_all(out)?;
    let written = par::map_indexed(manifest.len(), |i| -> Result<(String, _)> {
        let r = &manifest.entries[i];
        let img = render_tile(r)?;
        let path = tile_path(out, &r.slide_id, &r.tile_id);
        std::fs::create_dir_all(path.parent().expect("tile path has a slide dir"))?;
        write_png(&path, &img)?;
        Ok((pixel_hash(&img), img))
    });
    let mut hashes = BufWriter::new(File::create(out.join("tiles.sha256"))?);
    let mut images = Vec::with_capacity(manifest.len());
    for (r, w) in manifest.entries.iter().zip(written) {
        let (h, img) = w?;
        writeln!(hashes, "{}\t{h}", r.tile_id)?;
        images.push(img);
    }
    hashes.flush()?;
    let mut mf = BufWriter::new(File::create(out.join(MANIFEST_FILE))?);
    write_manifest(&manifest, &mut mf)?;
    mf.flush()?;
    rec.output("manifest", MANIFEST_FILE);

    // pooled toy-teacher features for native 32 px tiles
    if g.tile == 32 && g.expand == 0 {
        let teacher = TeacherExtractor::new(cfg.train.teacher_dim, cfg.train.teacher_seed);
        let feats = teacher_features(&teacher, &images)?;
        let set = EmbeddingSet::from_rows_f64(
            &rows_f64(&feats, teacher.dim()),
            TOY_EXTRACTOR,
            "toy-real",
        )
        .map_err(CliError::from)?;
        save_embeddings(&out.join("features.emb"), &set)?;
        write_ids(&out.join("features.ids"), &manifest.ids())?;
        rec.output("features", "features.emb");
    }
    Ok(())
}
