use std::path::{Path, PathBuf};

use genbench::interpolant::{SamplerConfig, TrainConfig};
use genbench::metrics::BootstrapSpec;
use genbench::preprocess::{ChromaSubsampling, JpegConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Full run configuration. Sections are shared by every subcommand; each one reads its own.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Top-level seed; when set it is copied into every module seed.
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub output: Option<PathBuf>,
    pub eval: EvalSection,
    pub pipeline: PipelineSection,
    pub train: TrainConfig,
    pub train_io: TrainIoSection,
    pub sample: SampleSection,
    pub sampler: SamplerConfig,
    pub bootstrap: BootstrapSection,
    pub jpeg: JpegSection,
    pub gen_data: GenDataSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub reference: Option<PathBuf>,
    pub candidate: Option<PathBuf>,
    /// Held-out real set, needed by `fld`.
    pub fld_test: Option<PathBuf>,
    /// Id lists (one per line) used to pair rows for `cosine_sim`; row order when absent.
    pub reference_ids: Option<PathBuf>,
    pub candidate_ids: Option<PathBuf>,
    /// Any of `fd`, `fld`, `pr` (precision and recall), `precision`, `recall`, `cosine_sim`.
    pub metrics: Vec<String>,
    pub k: usize,
    /// Only accept embedding files written by this extractor.
    pub extractor_id: Option<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            reference: None,
            candidate: None,
            fld_test: None,
            reference_ids: None,
            candidate_ids: None,
            metrics: vec!["fd".into()],
            k: genbench::metrics::DEFAULT_PR_K,
            extractor_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub manifest: Option<PathBuf>,
    pub tiles: Option<PathBuf>,
    /// Named ablation preset; overrides the explicit op lists.
    pub preset: Option<String>,
    /// Ops for guidance/training tiles, e.g. `["crop:224", "jpeg", "resize:224"]`.
    pub guidance_ops: Vec<String>,
    /// Ops for val_in/val_out tiles.
    pub validation_ops: Vec<String>,
    /// Restrict JPEG in the validation arm to val_out tiles.
    pub jpeg_val_out_only: bool,
    pub max_failure_rate: f64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            manifest: None,
            tiles: None,
            preset: None,
            guidance_ops: Vec::new(),
            validation_ops: Vec::new(),
            jpeg_val_out_only: false,
            max_failure_rate: 0.001,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainIoSection {
    /// Directory written by `gen-data` (manifest.tsv + tiles); generated on the fly when absent.
    pub data_dir: Option<PathBuf>,
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub checkpoint: Option<PathBuf>,
    pub n: usize,
    pub ema: bool,
    /// Embedding file whose rows condition the samples; unconditional when absent.
    pub conditions: Option<PathBuf>,
    /// Two condition rows to interpolate between, with one sample set per lambda.
    pub anchors: Option<[usize; 2]>,
    pub lambdas: Vec<f64>,
    /// Step counts to sweep; the sampler's own count when empty.
    pub steps: Vec<usize>,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self {
            checkpoint: None,
            n: 64,
            ema: true,
            conditions: None,
            anchors: None,
            lambdas: Vec::new(),
            steps: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    pub pool: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub fld_test: Option<PathBuf>,
    pub metric: String,
    pub subsample: usize,
    pub replicates: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        let d = BootstrapSpec::default();
        Self {
            pool: None,
            reference: None,
            fld_test: None,
            metric: "fd".into(),
            subsample: d.subsample_size,
            replicates: d.replicates,
            k: genbench::metrics::DEFAULT_PR_K,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JpegSection {
    pub quality: u8,
    pub chroma_subsampling: String,
}

impl Default for JpegSection {
    fn default() -> Self {
        let d = JpegConfig::default();
        Self {
            quality: d.quality,
            chroma_subsampling: d.chroma_subsampling.to_string(),
        }
    }
}

impl JpegSection {
    pub fn config(&self) -> Result<JpegConfig> {
        let sub: ChromaSubsampling = self
            .chroma_subsampling
            .parse()
            .map_err(|e| CliError::usage(format!("jpeg.chroma_subsampling: {e}")))?;
        Ok(JpegConfig::new(self.quality, sub)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataSection {
    pub n: usize,
    pub seed: u64,
    pub tile: u32,
    /// Render every tile with its coordinates expanded by this many pixels per side.
    pub expand: u32,
    pub proportions: Vec<f64>,
    pub slides_per_group: usize,
}

impl Default for GenDataSection {
    fn default() -> Self {
        let d = genbench::interpolant::ToyDatasetConfig::default();
        Self {
            n: 1024,
            seed: 0,
            tile: d.tile,
            expand: 0,
            proportions: d.proportions,
            slides_per_group: d.slides_per_group,
        }
    }
}

/// What produced a run record, kept so a record can be fed back as `--config`.
#[derive(Debug, Deserialize)]
struct RecordConfig {
    config: RunConfig,
}

impl RunConfig {
    /// Loads a TOML config, or the config snapshot inside a JSON run record.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let rec: RecordConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            return Ok(rec.config);
        }
        Ok(toml::from_str(&text)?)
    }

    /// Applies the top-level seed to every module and validates what can be checked up front.
    pub fn resolve(mut self) -> Result<Self> {
        let seed = *self.seed.get_or_insert(self.train.seed);
        self.train.seed = seed;
        self.sampler.seed = seed;
        self.bootstrap.seed = seed;
        self.gen_data.seed = seed;
        self.train.validate()?;
        self.sampler.validate()?;
        if self.threads == Some(0) {
            return Err(CliError::usage("threads must be at least 1"));
        }
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub fn required<'a, T>(v: &'a Option<T>, key: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| CliError::usage(format!("missing config key {key}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_text() {
        let cfg = RunConfig::default().resolve().unwrap();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn seed_reaches_every_module() {
        let cfg: RunConfig = toml::from_str("seed = 9\n[train]\nseed = 3\n").unwrap();
        let cfg = cfg.resolve().unwrap();
        assert_eq!(
            (
                cfg.train.seed,
                cfg.sampler.seed,
                cfg.bootstrap.seed,
                cfg.gen_data.seed
            ),
            (9, 9, 9, 9)
        );
    }

    #[test]
    fn sections_and_defaults() {
        let cfg: RunConfig =
            toml::from_str("[sampler]\nsteps = 20\nscheme = \"ode\"\n[eval]\nmetrics = [\"pr\"]\n")
                .unwrap();
        assert_eq!(cfg.sampler.steps, 20);
        assert_eq!(cfg.sampler.cfg_scale, 2.5);
        assert_eq!(cfg.bootstrap.subsample, 50_000);
        assert_eq!(cfg.bootstrap.replicates, 50);
        assert!(toml::from_str::<RunConfig>("[eval]\nbogus = 1\n").is_err());
    }
}
