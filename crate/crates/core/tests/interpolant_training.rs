use genbench::interpolant::{
    generate_toy_dataset, StepInputs, ToyDatasetConfig, TrainConfig, Trainer,
};
use genbench::RasterImage;

fn toy_images(n: usize, seed: u64) -> Vec<RasterImage> {
    generate_toy_dataset(n, seed, &ToyDatasetConfig::default())
        .unwrap()
        .images
}

fn tiny(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        batch_size: 2,
        vae_hidden: 4,
        hidden: 8,
        blocks: 2,
        mlp_ratio: 2,
        time_freqs: 4,
        align_hidden: 4,
        align_depth: 1,
        lambda_align: 0.7,
        recon_weight: 1.0,
        kl_beta: 0.3,
        p_drop: 0.5,
        ..Default::default()
    }
}

fn loss(tr: &Trainer, inp: &StepInputs) -> f64 {
    tr.evaluate(inp, false).unwrap().0.total
}

/// Central differences over every parameter of both models.
fn max_relative_error(tr: &mut Trainer, inp: &StepInputs) -> f64 {
    let (_, g) = tr.evaluate(inp, true).unwrap();
    let g = g.unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for group in 0..2 {
        let analytic = if group == 0 { &g.vae } else { &g.denoiser };
        for (ti, ga) in analytic.iter().enumerate() {
            for k in 0..ga.data.len() {
                let orig = param(tr, group, ti, k);
                set_param(tr, group, ti, k, orig + h);
                let up = loss(tr, inp);
                set_param(tr, group, ti, k, orig - h);
                let down = loss(tr, inp);
                set_param(tr, group, ti, k, orig);
                let numeric = (up - down) / (2.0 * h);
                let a = ga.data[k];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

fn param(tr: &Trainer, group: usize, t: usize, k: usize) -> f64 {
    let store = if group == 0 {
        &tr.vae.params
    } else {
        &tr.denoiser.params
    };
    store.tensors()[t].data[k]
}

fn set_param(tr: &mut Trainer, group: usize, t: usize, k: usize, v: f64) {
    let store = if group == 0 {
        &mut tr.vae.params
    } else {
        &mut tr.denoiser.params
    };
    store.tensors_mut()[t].data[k] = v;
}

#[test]
fn gradients_match_finite_differences() {
    let mut tr = Trainer::new(tiny(3), toy_images(4, 9)).unwrap();
    let n = tr.vae.params.scalar_count() + tr.denoiser.params.scalar_count();
    assert!(n <= 5000, "{n} parameters");
    let mut inp = tr.draw_inputs(0);
    // the diffusion term sees the latents through a stop-gradient
    inp.frozen_latents = Some(tr.sampled_latents(&inp).unwrap());
    let (l, _) = tr.evaluate(&inp, false).unwrap();
    assert!(l.diffusion > 0.0 && l.alignment > 0.0 && l.reconstruction > 0.0 && l.kl > 0.0);
    let err = max_relative_error(&mut tr, &inp);
    eprintln!("max relative error {err:e}");
    assert!(err <= 1e-4, "max relative error {err:e}");
}

#[test]
fn frozen_vae_without_alignment_is_plain_velocity_matching() {
    let cfg = TrainConfig {
        lambda_align: 0.0,
        freeze_vae: true,
        ..tiny(4)
    };
    let mut tr = Trainer::new(cfg, toy_images(4, 2)).unwrap();
    let vae = tr.vae.params.clone();
    let den = tr.denoiser.params.clone();
    let l = tr.train_step().unwrap();
    assert_eq!((l.alignment, l.reconstruction, l.kl), (0.0, 0.0, 0.0));
    assert_eq!(l.total, l.diffusion);
    assert_eq!(tr.vae.params, vae);
    assert_ne!(tr.denoiser.params, den);
}

fn overfit(steps: u64) -> (f64, f64) {
    let cfg = TrainConfig {
        seed: 11,
        batch_size: 8,
        learning_rate: 3e-3,
        p_drop: 0.0,
        ..Default::default()
    };
    let mut tr = Trainer::new(cfg, toy_images(1, 5)).unwrap();
    let probe = tr.draw_inputs(0);
    let before = loss(&tr, &probe);
    for _ in 0..steps {
        tr.train_step().unwrap();
    }
    (before, loss(&tr, &probe))
}

#[test]
fn single_sample_batch_loss_decreases() {
    let (before, after) = overfit(100);
    assert!(after < before, "{before} -> {after}");
}

#[test]
fn overfit_one_batch_halves_loss() {
    let (before, after) = overfit(200);
    assert!(after < 0.5 * before, "{before} -> {after}");
}
