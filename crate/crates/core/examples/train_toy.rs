//! Trains a reduced-width bundle (H/R networks, then the RoR classifier) on
//! the bundled sample clips and saves it.
//!
//! cargo run --example train_toy -- [steps] [batch] [lr] [decay_interval] [out] [--gan]

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use vidsteg::media::{load_dataset, prepare_pairs};
use vidsteg::nets::save_bundle;
use vidsteg::training::{train_hr, train_hr_gan, train_ror, TrainConfig, TrainOutput};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let gan = std::env::args().any(|a| a == "--gan");
    let mut args = std::env::args().skip(1).filter(|a| a != "--gan");
    let steps: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2000);
    let batch: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2);
    let lr: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2e-3);
    let decay: Option<usize> = args.next().map(|s| s.parse()).transpose()?;
    let out = args.next().map_or_else(|| PathBuf::from("toy.safetensors"), PathBuf::from);

    let clips = load_dataset("data/sample".as_ref())?.into_iter().map(Arc::new).collect();
    let data = prepare_pairs(clips, [0.5, 0.25, 0.25], 7)?;
    let cfg = TrainConfig {
        max_steps: steps,
        batch_size: batch,
        learning_rate: lr,
        decay_interval: decay,
        val_interval: (steps / 10).max(1),
        seed: 7,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let train = if gan { train_hr_gan } else { train_hr };
    let (mut bundle, report) = train(&data.train, &data.validation, &cfg, &TrainOutput::default())?;
    let (h, r) = report.tail_losses(20);
    println!(
        "{steps} steps in {:.1}s; loss h {:.4} -> {h:.4}, r {:.4} -> {r:.4}; val container apd {:.2} -> best step {}",
        t0.elapsed().as_secs_f64(),
        report.log[0].h_loss,
        report.log[0].r_loss,
        report.initial_val_apd_container,
        report.best_step,
    );
    let ror = train_ror(&mut bundle, &data.train, &data.validation, &cfg)?;
    println!("RoR held-out accuracy {:.4} over {} outputs", ror.heldout_accuracy, ror.heldout_samples);
    save_bundle(&bundle, &cfg.digest(), &out)?;
    println!("saved {}", out.display());
    Ok(())
}
