use rand::Rng;

use super::{InterpolantError, Result};
use crate::datastore::{Split, TileManifest, TileRecord};
use crate::preprocess::RasterImage;
use crate::{par, rng};

/// Side of every procedural slide, in pixels.
pub const SLIDE_SIDE: u64 = 4096;
/// Keeps sampled tiles far enough from the slide edge to allow a 16 px expansion.
const EDGE_MARGIN: i64 = 16;
const SLIDE_NAMESPACE: u64 = 0x51_1de5;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDatasetConfig {
    /// Group sampling weights; their count sets the number of groups.
    pub proportions: Vec<f64>,
    pub slides_per_group: usize,
    pub tile: u32,
    /// Probability that a tile from a training slide is held out as val_in.
    pub val_in_fraction: f64,
}

impl Default for ToyDatasetConfig {
    fn default() -> Self {
        Self {
            proportions: vec![0.4, 0.3, 0.2, 0.1],
            slides_per_group: 8,
            tile: 32,
            val_in_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub images: Vec<RasterImage>,
    pub manifest: TileManifest,
}

impl ToyDataset {
    /// Images whose manifest row is in `split`.
    pub fn split(&self, split: Split) -> Vec<RasterImage> {
        self.images
            .iter()
            .zip(&self.manifest.entries)
            .filter(|(_, r)| r.split == split)
            .map(|(i, _)| i.clone())
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct SlideStyle {
    seed: u64,
    background: [f64; 3],
    nucleus: [f64; 3],
    cell: f64,
    radius: f64,
    density: f64,
    fiber_angle: f64,
    fiber_freq: f64,
    fiber_phase: f64,
}

fn unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn group_palette(group: usize) -> ([f64; 3], [f64; 3], f64, f64, f64) {
    match group {
        0 => ([232.0, 180.0, 205.0], [92.0, 52.0, 140.0], 8.0, 3.2, 0.7),
        1 => ([244.0, 214.0, 228.0], [130.0, 80.0, 170.0], 12.0, 4.5, 0.45),
        2 => ([205.0, 125.0, 172.0], [60.0, 32.0, 108.0], 7.0, 2.6, 0.85),
        3 => ([210.0, 196.0, 232.0], [72.0, 64.0, 150.0], 10.0, 3.8, 0.6),
        g => {
            let h = rng::mix(0x9a1e, g as u64);
            let bg = [
                200.0 + 50.0 * unit(h),
                120.0 + 100.0 * unit(h >> 7),
                170.0 + 60.0 * unit(h >> 13),
            ];
            let nu = [
                60.0 + 70.0 * unit(h >> 19),
                30.0 + 50.0 * unit(h >> 23),
                100.0 + 70.0 * unit(h >> 29),
            ];
            (
                bg,
                nu,
                7.0 + 5.0 * unit(h >> 31),
                2.5 + 2.0 * unit(h >> 37),
                0.4 + 0.5 * unit(h >> 41),
            )
        }
    }
}

fn parse_slide(slide_id: &str) -> Result<(usize, usize)> {
    let bad = || InterpolantError::Config(format!("not a procedural slide id: {slide_id:?}"));
    let rest = slide_id.strip_prefix('g').ok_or_else(bad)?;
    let (g, k) = rest.split_once("-s").ok_or_else(bad)?;
    Ok((g.parse().map_err(|_| bad())?, k.parse().map_err(|_| bad())?))
}

pub fn slide_id(group: usize, slide: usize) -> String {
    format!("g{group}-s{slide}")
}

fn slide_style(group: usize, slide: usize) -> SlideStyle {
    let seed = rng::mix(SLIDE_NAMESPACE, (group as u64) << 32 | slide as u64);
    let (mut background, mut nucleus, cell, radius, density) = group_palette(group);
    // stain variation between slides of one group
    for c in 0..3 {
        background[c] += 16.0 * (unit(rng::mix(seed, c as u64)) - 0.5);
        nucleus[c] += 16.0 * (unit(rng::mix(seed, 3 + c as u64)) - 0.5);
    }
    SlideStyle {
        seed,
        background,
        nucleus,
        cell,
        radius: radius * (0.9 + 0.2 * unit(rng::mix(seed, 6))),
        density,
        fiber_angle: std::f64::consts::PI * unit(rng::mix(seed, 7)),
        fiber_freq: 0.15 + 0.2 * unit(rng::mix(seed, 8)),
        fiber_phase: std::f64::consts::TAU * unit(rng::mix(seed, 9)),
    }
}

fn cell_hash(seed: u64, cx: i64, cy: i64) -> u64 {
    rng::mix(rng::mix(seed, cx as u64), cy as u64)
}

/// Colour of slide pixel `(x, y)`: a pure function of the slide and the coordinates.
fn pixel(s: &SlideStyle, x: i64, y: i64) -> [u8; 3] {
    let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
    let (cx, cy) = ((fx / s.cell).floor() as i64, (fy / s.cell).floor() as i64);
    let mut best = f64::INFINITY;
    for j in cy - 1..=cy + 1 {
        for i in cx - 1..=cx + 1 {
            let h = cell_hash(s.seed, i, j);
            if unit(h) >= s.density {
                continue;
            }
            let h2 = rng::mix(h, 1);
            let px = (i as f64 + unit(h2)) * s.cell;
            let py = (j as f64 + unit(rng::mix(h, 2))) * s.cell;
            let r = s.radius * (0.6 + 0.8 * unit(rng::mix(h, 3)));
            let d2 = ((fx - px).powi(2) + (fy - py).powi(2)) / (r * r);
            best = best.min(d2);
        }
    }
    let w = if best < 1.0 { 1.0 - best * best } else { 0.0 };
    let along = fx * s.fiber_angle.cos() + fy * s.fiber_angle.sin();
    let fiber = 0.5 + 0.5 * (along * s.fiber_freq + s.fiber_phase).sin();
    let noise = rng::mix(s.seed ^ 0xf00d, cell_hash(s.seed, x, y));
    std::array::from_fn(|c| {
        let bg = s.background[c] * (0.85 + 0.15 * fiber);
        let jitter = 12.0 * (unit(rng::mix(noise, c as u64)) - 0.5);
        (bg * (1.0 - w) + s.nucleus[c] * w + jitter)
            .round()
            .clamp(0.0, 255.0) as u8
    })
}

/// Renders the `w x h` region of a procedural slide with top-left corner `(x, y)`.
pub fn render_region(slide_id: &str, x: i64, y: i64, w: u32, h: u32) -> Result<RasterImage> {
    let (g, k) = parse_slide(slide_id)?;
    let style = slide_style(g, k);
    let mut data = Vec::with_capacity(w as usize * h as usize * 3);
    for dy in 0..i64::from(h) {
        for dx in 0..i64::from(w) {
            data.extend_from_slice(&pixel(&style, x + dx, y + dy));
        }
    }
    Ok(RasterImage::new(w, h, 3, data)?)
}

/// Renders the region a manifest row points at.
pub fn render_tile(rec: &TileRecord) -> Result<RasterImage> {
    render_region(&rec.slide_id, rec.x, rec.y, rec.width, rec.height)
}

fn draw_group(r: &mut impl Rng, cumulative: &[f64]) -> usize {
    let u: f64 = r.random::<f64>() * cumulative[cumulative.len() - 1];
    cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative.len() - 1)
}

/// Manifest of `n` procedural tiles. Slides `0..S-2` of each group feed train and val_in, slide
/// `S-2` is val_out and slide `S-1` is the guidance slide.
pub fn toy_manifest(n: usize, seed: u64, cfg: &ToyDatasetConfig) -> Result<TileManifest> {
    if n == 0 {
        return Err(InterpolantError::Config(
            "dataset size must be at least 1".into(),
        ));
    }
    if cfg.proportions.is_empty()
        || cfg
            .proportions
            .iter()
            .any(|p| !(p.is_finite() && *p >= 0.0))
    {
        return Err(InterpolantError::Config(
            "group proportions must be non-negative".into(),
        ));
    }
    let cumulative: Vec<f64> = cfg
        .proportions
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    if cumulative[cumulative.len() - 1] <= 0.0 {
        return Err(InterpolantError::Config(
            "group proportions sum to zero".into(),
        ));
    }
    if cfg.slides_per_group < 3 {
        return Err(InterpolantError::Config(
            "need at least 3 slides per group".into(),
        ));
    }
    if cfg.tile == 0 || u64::from(cfg.tile) + 2 * EDGE_MARGIN as u64 >= SLIDE_SIDE {
        return Err(InterpolantError::Config(format!(
            "tile size {} does not fit a slide",
            cfg.tile
        )));
    }
    let hi = SLIDE_SIDE as i64 - i64::from(cfg.tile) - EDGE_MARGIN;
    let s = cfg.slides_per_group;
    let entries = (0..n)
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let group = draw_group(&mut r, &cumulative);
            let slide = r.random_range(0..s);
            let x = r.random_range(EDGE_MARGIN..=hi);
            let y = r.random_range(EDGE_MARGIN..=hi);
            let held: f64 = r.random();
            let split = if slide == s - 1 {
                Split::Guidance
            } else if slide == s - 2 {
                Split::ValOut
            } else if held < cfg.val_in_fraction {
                Split::ValIn
            } else {
                Split::Train
            };
            TileRecord {
                tile_id: format!("toy-{seed}-{i:06}"),
                slide_id: slide_id(group, slide),
                group: format!("g{group}"),
                x,
                y,
                width: cfg.tile,
                height: cfg.tile,
                mpp: 0.5,
                split,
            }
        })
        .collect();
    Ok(TileManifest::new(entries)?)
}

/// Procedural tiles and their manifest.
pub fn generate_toy_dataset(n: usize, seed: u64, cfg: &ToyDatasetConfig) -> Result<ToyDataset> {
    let manifest = toy_manifest(n, seed, cfg)?;
    let images = par::map_indexed(n, |i| render_tile(&manifest.entries[i]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(ToyDataset { images, manifest })
}
