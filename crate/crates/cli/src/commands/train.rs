use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use genbench::interpolant::{
    generate_toy_dataset, Checkpoint, LossBreakdown, ToyDatasetConfig, Trainer,
};
use genbench::preprocess::{read_png, tile_path};
use genbench::{par, RasterImage, Split};

use super::{load_manifest, MANIFEST_FILE};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::record::RunRecord;

pub const LOSS_LOG: &str = "loss.log";
pub const LOSS_HEADER: &str =
    "step\ttotal\tdiffusion\talignment\treconstruction\tkl\tcondition_usage";

/// Training split of a `gen-data` directory.
pub fn load_train_images(dir: &Path) -> Result<Vec<RasterImage>> {
    let m = load_manifest(&dir.join(MANIFEST_FILE))?.filter_split(Split::Train);
    if m.is_empty() {
        return Err(CliError::data(format!(
            "{} has no train tiles",
            dir.display()
        )));
    }
    par::map_indexed(m.len(), |i| {
        let r = &m.entries[i];
        read_png(&tile_path(dir, &r.slide_id, &r.tile_id))
            .map_err(|e| CliError::from(e).context(&r.tile_id))
    })
    .into_iter()
    .collect()
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let f = File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Checkpoint::read(BufReader::new(f)).map_err(|e| CliError::from(e).context(path.display()))
}

fn write_checkpoint(dir: &Path, tr: &Trainer) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let ckpt = tr.checkpoint();
    let path = dir.join(format!("step_{:08}.ckpt", tr.step));
    let tmp = dir.join(".partial.ckpt");
    let mut w = BufWriter::new(File::create(&tmp)?);
    ckpt.write(&mut w)?;
    w.into_inner()
        .map_err(|e| CliError::data(e.to_string()))?
        .sync_all()?;
    fs::rename(&tmp, &path)?;
    fs::copy(&path, dir.join("last.ckpt.tmp"))?;
    fs::rename(dir.join("last.ckpt.tmp"), dir.join("last.ckpt"))?;
    Ok(path)
}

#[derive(Default)]
struct Window {
    sum: LossBreakdown,
    n: u64,
}

impl Window {
    fn add(&mut self, l: &LossBreakdown) {
        self.sum.total += l.total;
        self.sum.diffusion += l.diffusion;
        self.sum.alignment += l.alignment;
        self.sum.reconstruction += l.reconstruction;
        self.sum.kl += l.kl;
        self.sum.condition_usage += l.condition_usage;
        self.n += 1;
    }

    fn flush(&mut self, step: u64, out: &mut impl Write) -> Result<()> {
        if self.n == 0 {
            return Ok(());
        }
        let n = self.n as f64;
        let s = &self.sum;
        writeln!(
            out,
            "{step}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6}",
            s.total / n,
            s.diffusion / n,
            s.alignment / n,
            s.reconstruction / n,
            s.kl / n,
            s.condition_usage / n
        )?;
        out.flush()?;
        *self = Self::default();
        Ok(())
    }
}

pub fn run(cfg: &RunConfig, out: &Path, rec: &mut RunRecord) -> Result<()> {
    let images = match &cfg.train_io.data_dir {
        Some(dir) => load_train_images(dir)?,
        None => generate_toy_dataset(
            cfg.train.dataset_size,
            cfg.train.dataset_seed,
            &ToyDatasetConfig::default(),
        )?
        .split(Split::Train),
    };
    if images.is_empty() {
        return Err(CliError::data("no training images"));
    }
    let mut tr = match &cfg.train_io.resume {
        Some(path) => {
            let ckpt = read_checkpoint(path)?;
            let mut want = cfg.train.clone();
            want.steps = ckpt.config.steps;
            if want != ckpt.config {
                rec.warn("checkpoint config differs from the run config; continuing with the checkpoint's");
            }
            let mut tr = Trainer::restore(&ckpt, images)?;
            tr.cfg.steps = cfg.train.steps;
            tr
        }
        None => Trainer::new(cfg.train.clone(), images)?,
    };
    fs::create_dir_all(out)?;
    let ckpt_dir = out.join("checkpoints");
    let log_path = out.join(LOSS_LOG);
    let mut log = if tr.step > 0 && log_path.exists() {
        BufWriter::new(fs::OpenOptions::new().append(true).open(&log_path)?)
    } else {
        let mut w = BufWriter::new(File::create(&log_path)?);
        writeln!(w, "{LOSS_HEADER}")?;
        w
    };
    rec.output("loss_log", LOSS_LOG);

    let every = tr.cfg.log_every.max(1);
    let mut window = Window::default();
    while tr.step < tr.cfg.steps {
        let losses = match tr.train_step() {
            Ok(l) => l,
            Err(e) => {
                window.flush(tr.step, &mut log)?;
                let err = CliError::from(e);
                rec.warn(format!("stopped at step {}: {}", tr.step, err.message));
                return Err(err);
            }
        };
        window.add(&losses);
        if tr.step % every == 0 {
            window.flush(tr.step, &mut log)?;
        }
        if tr.cfg.checkpoint_every > 0 && tr.step % tr.cfg.checkpoint_every == 0 {
            write_checkpoint(&ckpt_dir, &tr)?;
        }
    }
    window.flush(tr.step, &mut log)?;
    let last = write_checkpoint(&ckpt_dir, &tr)?;
    rec.output("checkpoint", last.strip_prefix(out).unwrap_or(&last));
    Ok(())
}
