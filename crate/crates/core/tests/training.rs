use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vidsteg::error::Error;
use vidsteg::media::{make_pairs, ClipPair, Frame, VideoClip};
use vidsteg::nets::{load_bundle, save_bundle, ArchConfig, ModelBundle, RorClass};
use vidsteg::training::{
    balanced, build_hiding_data, collect_ror_samples, train_hr, train_hr_gan, train_ror, validate_hiding, LossWeights,
    RorConfig, TrainConfig, TrainOutput,
};
use vidsteg_nn::Layer;

fn micro() -> ArchConfig {
    ArchConfig { hnet_base: 2, rnet_width: 2, ror_base: 2, adversary_base: 2, frame_size: (128, 128) }
}

/// A slowly brightening scene with one hard cut in the middle.
fn clip(id: &str, seed: u64, frames: usize) -> Arc<VideoClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenes: Vec<Frame> =
        (0..2).map(|_| Frame::from_fn(128, 128, |_, _, _| rng.random_range(0.1..0.8)).unwrap()).collect();
    let out = (0..frames)
        .map(|t| {
            let base = &scenes[usize::from(t >= frames / 2)];
            Frame::from_clamped(base.pixels().mapv(|v| v + 0.01 * t as f32)).unwrap()
        })
        .collect();
    Arc::new(VideoClip::new(id, out).unwrap())
}

fn pairs(n: usize, seed: u64) -> Vec<ClipPair> {
    let clips: Vec<_> = (0..n).map(|i| clip(&format!("c{i}"), seed + i as u64, 6)).collect();
    make_pairs(&clips, seed).unwrap()
}

fn cfg(steps: usize) -> TrainConfig {
    TrainConfig {
        arch: micro(),
        max_steps: steps,
        batch_size: 2,
        val_interval: 2,
        val_frames: 4,
        seed: 11,
        ror: RorConfig { max_steps: 20, batch_size: 2, ..RorConfig::default() },
        ..TrainConfig::default()
    }
}

#[test]
fn both_branches_get_frames() {
    let data = build_hiding_data(&pairs(2, 0), 30.68).unwrap();
    assert!(!data.reference.is_empty() && !data.residual.is_empty());
    assert_eq!(data.len(), 12);
}

#[test]
fn same_seed_same_trace() {
    let p = pairs(2, 1);
    let (_, a) = train_hr(&p, &[], &cfg(4), &TrainOutput::default()).unwrap();
    let (_, b) = train_hr(&p, &[], &cfg(4), &TrainOutput::default()).unwrap();
    assert_eq!(a.log, b.log);
    let (_, c) = train_hr(&p, &[], &TrainConfig { seed: 12, ..cfg(4) }, &TrainOutput::default()).unwrap();
    assert_ne!(a.log[0].h_loss, c.log[0].h_loss);
}

#[test]
fn zero_lambda_gan_matches_plain_training() {
    let p = pairs(2, 2);
    let c = TrainConfig { weights: LossWeights { lambda_gan: 0.0, ..LossWeights::default() }, ..cfg(4) };
    let (_, plain) = train_hr(&p, &[], &c, &TrainOutput::default()).unwrap();
    let (_, gan) = train_hr_gan(&p, &[], &c, &TrainOutput::default()).unwrap();
    for (a, b) in plain.log.iter().zip(&gan.log) {
        assert_eq!((a.h_loss, a.r_loss, a.val_apd_container), (b.h_loss, b.r_loss, b.val_apd_container));
        assert!(b.gan_d_loss.is_some() && a.gan_d_loss.is_none());
    }
}

#[test]
fn best_checkpoint_roundtrips_validation_loss() {
    let p = pairs(2, 3);
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(6);
    let (bundle, report) = train_hr(&p, &[], &c, &TrainOutput { dir: Some(dir.path().to_path_buf()) }).unwrap();
    assert_eq!(bundle.state.hr_steps, report.best_step);
    let path = report.best_checkpoint.clone().expect("checkpoint written");
    let (loaded, meta) = load_bundle(&path).unwrap();
    assert_eq!(meta.config_digest, c.digest());
    let data = build_hiding_data(&p, c.threshold).unwrap();
    let a = validate_hiding(&bundle, &data, 1.0).unwrap();
    let b = validate_hiding(&loaded, &data, 1.0).unwrap();
    assert_eq!(a, b);

    let again = dir.path().join("again.safetensors");
    save_bundle(&loaded, &c.digest(), &again).unwrap();
    assert_eq!(validate_hiding(&load_bundle(&again).unwrap().0, &data, 1.0).unwrap(), a);
}

#[test]
fn training_reduces_hiding_loss_on_a_tiny_set() {
    let p = pairs(2, 4);
    let (_, report) =
        train_hr(&p, &[], &TrainConfig { learning_rate: 5e-3, ..cfg(60) }, &TrainOutput::default()).unwrap();
    let (h, _) = report.tail_losses(10);
    assert!(h < report.log[0].h_loss, "{h} vs {}", report.log[0].h_loss);
}

#[test]
fn empty_training_set_is_rejected() {
    assert!(matches!(train_hr(&[], &[], &cfg(2), &TrainOutput::default()), Err(Error::EmptyDataset(_))));
}

#[test]
fn ror_needs_trained_hiding_networks() {
    let mut bundle = ModelBundle::new(micro(), 0);
    assert!(matches!(train_ror(&mut bundle, &pairs(2, 5), &[], &cfg(1)), Err(Error::Untrained(_))));
}

#[test]
fn every_container_yields_one_real_and_one_fake_output() {
    let mut bundle = ModelBundle::new(micro(), 0);
    bundle.state.hr_steps = 1;
    let data = build_hiding_data(&pairs(2, 6), 30.68).unwrap();
    let samples = collect_ror_samples(&bundle, &data).unwrap();
    assert_eq!(samples.len(), 2 * data.len());
    let count = |c| samples.iter().filter(|s| s.class == c).count();
    assert_eq!(count(RorClass::RealReference), data.reference.len());
    assert_eq!(count(RorClass::FakeResidual), data.reference.len());
    assert_eq!(count(RorClass::RealResidual), data.residual.len());
    assert_eq!(count(RorClass::FakeReference), data.residual.len());
    for pair in samples.chunks(2) {
        assert_eq!(pair[0].container, pair[1].container);
    }
    let b = balanced(&data, None);
    assert_eq!(b.reference.len(), b.residual.len());
}

#[test]
fn shuffled_ror_labels_stay_near_chance() {
    let p = pairs(4, 7);
    let held = pairs(8, 70);
    let mut c = cfg(2);
    let (mut bundle, _) = train_hr(&p, &[], &c, &TrainOutput::default()).unwrap();
    c.ror = RorConfig { shuffle_labels: true, max_steps: 40, batch_size: 4, ..RorConfig::default() };
    let report = train_ror(&mut bundle, &p, &held, &c).unwrap();
    assert!(report.heldout_samples >= 40);
    assert!((report.heldout_accuracy - 0.25).abs() <= 0.05, "{}", report.heldout_accuracy);
}

#[test]
fn ror_recalibration_touches_only_running_statistics() {
    let p = pairs(2, 8);
    let c = cfg(2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hr.safetensors");
    let (base, _) = train_hr(&p, &[], &c, &TrainOutput::default()).unwrap();
    save_bundle(&base, &c.digest(), &path).unwrap();
    let ror_params = |recal: usize| {
        let mut b = load_bundle(&path).unwrap().0;
        let mut c = c.clone();
        c.ror.recalibration_batches = recal;
        train_ror(&mut b, &p, &[], &c).unwrap();
        let (mut learned, mut buffers) = (Vec::new(), Vec::new());
        b.ror_net.visit(&mut |_, p| {
            if p.is_learnable() {
                learned.extend_from_slice(&p.value)
            } else {
                buffers.extend_from_slice(&p.value)
            }
        });
        (learned, buffers)
    };
    let (l0, b0) = ror_params(0);
    let (l1, b1) = ror_params(5);
    assert_eq!(l0, l1);
    assert_ne!(b0, b1);
}
