use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use genbench::datastore::{read_embeddings, read_manifest, write_embeddings};
use genbench::{EmbeddingSet, TileManifest};

use crate::error::{CliError, Result};

pub mod bootstrap;
pub mod eval;
pub mod gen_data;
pub mod pipeline;
pub mod sample;
pub mod train;

/// Extractor id written on features of the toy teacher.
pub const TOY_EXTRACTOR: &str = "toy-teacher";
pub const MANIFEST_FILE: &str = "manifest.tsv";

pub fn load_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let f = File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    read_embeddings(BufReader::new(f)).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn save_embeddings(path: &Path, set: &EmbeddingSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_embeddings(set, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<TileManifest> {
    let f = File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    read_manifest(BufReader::new(f)).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn read_ids(path: &Path) -> Result<Vec<String>> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

pub fn write_ids(path: &Path, ids: &[String]) -> Result<()> {
    let mut text = ids.join("\n");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Source tag of a set, falling back to the file stem.
pub fn tag(set: &EmbeddingSet, path: &Path) -> String {
    if set.source_tag().is_empty() {
        path.file_stem().map_or_else(String::new, |s| {
            s.to_string_lossy().replace(['\t', '=', '\n'], "_")
        })
    } else {
        set.source_tag().to_string()
    }
}

pub fn rows_f64(values: &[f64], dim: usize) -> Vec<Vec<f64>> {
    values.chunks(dim).map(<[f64]>::to_vec).collect()
}
