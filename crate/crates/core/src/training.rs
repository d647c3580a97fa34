//! Pixel losses, joint H/R training (optionally with a GAN discriminator) and
//! RoR classifier training.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vidsteg_nn::loss::{bce_with_logits, cross_entropy, l1};
use vidsteg_nn::{Adam, Layer, LrSchedule, Mode, Optimizer, Sgd, StateDict, Tensor};

use crate::error::{Error, Result};
use crate::labeling::{compute_residual, label_clip, reconstruct_frame, FrameLabel, ResidualPlane, DEFAULT_THRESHOLD};
use crate::media::{apd, ClipPair, Frame};
use crate::nets::{
    check_classifier_input, frames_to_tensor, hnet_input, save_bundle, Adversary, ArchConfig, ModelBundle, RorClass,
};
use crate::seed::rng_for;

/// Mean absolute difference in `[0, 1]` units.
pub fn hiding_loss(container: &Frame, cover: &Frame) -> Result<f64> {
    pixel_l1(container, cover)
}

/// Mean absolute difference between a decoded output and its target (the
/// secret frame, or the encoded residual plane).
pub fn reveal_loss(decoded: &Frame, target: &Frame) -> Result<f64> {
    pixel_l1(decoded, target)
}

fn pixel_l1(a: &Frame, b: &Frame) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(a.dims(), b.dims()));
    }
    let n = a.pixels().len() as f64;
    Ok(a.pixels().iter().zip(b.pixels()).map(|(&x, &y)| (x as f64 - y as f64).abs()).sum::<f64>() / n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub beta_reveal: f64,
    pub lambda_gan: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { beta_reveal: 1.0, lambda_gan: 3e-4 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub decay_factor: f64,
    /// Steps between decays; defaults to a third of `max_steps`.
    pub decay_interval: Option<usize>,
    pub momentum: f64,
    /// Frames per branch per step.
    pub batch_size: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub threshold: f64,
    pub val_interval: usize,
    /// Validation frames per branch.
    pub val_frames: usize,
    pub checkpoint_interval: Option<usize>,
    pub arch: ArchConfig,
    pub weights: LossWeights,
    pub ror: RorConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            learning_rate: 2e-3,
            decay_factor: 0.1,
            decay_interval: None,
            momentum: 0.9,
            batch_size: 2,
            max_steps: 1000,
            seed: 0,
            threshold: DEFAULT_THRESHOLD,
            val_interval: 100,
            val_frames: 16,
            checkpoint_interval: None,
            arch: ArchConfig::toy(),
            weights: LossWeights::default(),
            ror: RorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RorConfig {
    pub learning_rate: f64,
    /// Containers per branch per step; each yields two decoded samples.
    pub batch_size: usize,
    pub max_steps: usize,
    /// Train on shuffled labels (chance-level sanity check).
    pub shuffle_labels: bool,
    /// Forward-only batches after training that re-estimate the batch-norm
    /// running statistics for the final weights.
    pub recalibration_batches: usize,
}

impl Default for RorConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, batch_size: 4, max_steps: 150, shuffle_labels: false, recalibration_batches: 50 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad("decay_factor must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.val_interval == 0 || self.ror.batch_size == 0 {
            return bad("batch sizes and val_interval must be positive");
        }
        if self.weights.beta_reveal < 0.0 || self.weights.lambda_gan < 0.0 {
            return bad("loss weights must be >= 0");
        }
        if !(self.ror.learning_rate > 0.0) {
            return bad("ror.learning_rate must be > 0");
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            base: self.learning_rate,
            factor: self.decay_factor,
            interval: self.decay_interval.unwrap_or((self.max_steps / 3).max(1)),
        }
    }

    fn optimizer(&self, schedule: LrSchedule) -> Optimizer<f32> {
        match self.optimizer {
            OptimizerKind::Sgd => Optimizer::Sgd(Sgd::new(schedule, self.momentum)),
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(schedule)),
        }
    }

    /// Hex digest of the serialized config.
    pub fn digest(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One frame to hide: the payload is the secret frame itself (reference
/// branch) or its encoded residual (residual branch).
#[derive(Clone, Debug)]
pub struct HidingSample {
    pub label: FrameLabel,
    pub cover: Frame,
    pub payload: Frame,
    pub secret: Frame,
    /// Governing reference of a residual sample.
    pub reference: Option<Frame>,
}

impl HidingSample {
    /// The secret frame recovered from a decoded payload, using the true
    /// reference for residuals.
    pub fn recover(&self, decoded: &Frame) -> Result<Frame> {
        match &self.reference {
            None => Ok(decoded.clone()),
            Some(r) => reconstruct_frame(&ResidualPlane::from_encoded(decoded.clone()), r),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct HidingData {
    pub reference: Vec<HidingSample>,
    pub residual: Vec<HidingSample>,
}

impl HidingData {
    pub fn branch(&self, label: FrameLabel) -> &[HidingSample] {
        match label {
            FrameLabel::Reference => &self.reference,
            FrameLabel::Residual => &self.residual,
        }
    }

    pub fn len(&self) -> usize {
        self.reference.len() + self.residual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Labels every secret clip and routes frame `t` of the secret, against
/// frame `t` of the cover, to the branch matching its label.
pub fn build_hiding_data(pairs: &[ClipPair], threshold: f64) -> Result<HidingData> {
    let mut data = HidingData::default();
    for pair in pairs {
        let labeled = label_clip(Arc::clone(&pair.secret), threshold)?;
        let secret = pair.secret.frames();
        for (t, cover) in pair.cover.frames().iter().enumerate() {
            let s = &secret[t];
            match labeled.labels[t] {
                FrameLabel::Reference => data.reference.push(HidingSample {
                    label: FrameLabel::Reference,
                    cover: cover.clone(),
                    payload: s.clone(),
                    secret: s.clone(),
                    reference: None,
                }),
                FrameLabel::Residual => {
                    let r = &secret[labeled.reference_index[t]];
                    data.residual.push(HidingSample {
                        label: FrameLabel::Residual,
                        cover: cover.clone(),
                        payload: compute_residual(s, r)?.into_frame(),
                        secret: s.clone(),
                        reference: Some(r.clone()),
                    })
                }
            }
        }
    }
    Ok(data)
}

/// An evenly spaced subset of at most `n` samples.
fn spread<T: Clone>(items: &[T], n: usize) -> Vec<T> {
    if items.len() <= n {
        return items.to_vec();
    }
    (0..n).map(|i| items[i * items.len() / n].clone()).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: usize,
    pub h_loss: f64,
    pub r_loss: f64,
    pub gan_d_loss: Option<f64>,
    pub gan_g_loss: Option<f64>,
    pub val_apd_container: Option<f64>,
    pub val_apd_secret: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub log: Vec<TrainLogRow>,
    /// Validation container APD of the untrained networks.
    pub initial_val_apd_container: f64,
    pub best_step: usize,
    pub best_val_loss: f64,
    pub best_checkpoint: Option<PathBuf>,
}

impl TrainReport {
    /// Mean `(h_loss, r_loss)` over the last `n` logged steps.
    pub fn tail_losses(&self, n: usize) -> (f64, f64) {
        let tail = &self.log[self.log.len().saturating_sub(n)..];
        let k = tail.len().max(1) as f64;
        (tail.iter().map(|r| r.h_loss).sum::<f64>() / k, tail.iter().map(|r| r.r_loss).sum::<f64>() / k)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_rows(&self.log, path)
    }
}

fn write_rows<R: Serialize>(rows: &[R], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(Error::io(path))?;
    Ok(())
}

/// Validation metrics on a fixed subset, evaluation mode.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ValMetrics {
    pub apd_container: f64,
    pub apd_secret: f64,
    pub loss: f64,
}

pub fn validate_hiding(bundle: &ModelBundle, data: &HidingData, beta: f64) -> Result<ValMetrics> {
    let (mut c_sum, mut s_sum, mut loss, mut n) = (0.0, 0.0, 0.0, 0usize);
    for label in [FrameLabel::Reference, FrameLabel::Residual] {
        let samples = data.branch(label);
        if samples.is_empty() {
            continue;
        }
        let covers: Vec<&Frame> = samples.iter().map(|s| &s.cover).collect();
        let payloads: Vec<&Frame> = samples.iter().map(|s| &s.payload).collect();
        let containers = bundle.hide(label, &covers, &payloads)?;
        let decoded = bundle.reveal(label, &containers.iter().collect::<Vec<_>>())?;
        for ((s, c), d) in samples.iter().zip(&containers).zip(&decoded) {
            c_sum += apd(c, &s.cover)?;
            s_sum += apd(&s.recover(d)?, &s.secret)?;
            loss += hiding_loss(c, &s.cover)? + beta * reveal_loss(d, &s.payload)?;
            n += 1;
        }
    }
    let n = n.max(1) as f64;
    Ok(ValMetrics { apd_container: c_sum / n, apd_secret: s_sum / n, loss: loss / n })
}

fn snapshot(bundle: &ModelBundle) -> Vec<StateDict> {
    bundle.networks().iter().map(|(_, n)| n.state_dict()).collect()
}

fn restore(bundle: &mut ModelBundle, snap: &[StateDict]) {
    for ((_, net), sd) in bundle.networks_mut().into_iter().zip(snap) {
        net.load_state_dict(sd).expect("snapshot of the same bundle");
    }
}

struct BranchOutcome {
    h_loss: f64,
    r_loss: f64,
    containers: Tensor<f32>,
    covers: Tensor<f32>,
    g_loss: f64,
}

/// Forward and backward through one H/R branch. Gradients accumulate in the
/// two networks; the discriminator only contributes the generator term.
fn branch_step(
    bundle: &mut ModelBundle,
    label: FrameLabel,
    batch: &[&HidingSample],
    weights: &LossWeights,
    disc: Option<&mut Adversary>,
) -> Result<BranchOutcome> {
    let covers: Vec<&Frame> = batch.iter().map(|s| &s.cover).collect();
    let payloads: Vec<&Frame> = batch.iter().map(|s| &s.payload).collect();
    let x = hnet_input(&covers, &payloads)?;
    let cover_t = frames_to_tensor(&covers)?;
    let payload_t = frames_to_tensor(&payloads)?;
    let (hnet, rnet) = match label {
        FrameLabel::Reference => (&mut bundle.ref_hnet, &mut bundle.ref_rnet),
        FrameLabel::Residual => (&mut bundle.res_hnet, &mut bundle.res_rnet),
    };
    let containers = hnet.forward(&x, Mode::Train);
    let decoded = rnet.forward(&containers, Mode::Train);
    let (h_loss, mut g_c) = l1(&containers, &cover_t);
    let (r_loss, g_d) = l1(&decoded, &payload_t);
    let g_through_r = rnet.backward(&g_d.mapv(|g| g * weights.beta_reveal as f32));
    g_c += &g_through_r;
    let mut g_loss = 0.0;
    if let Some(d) = disc {
        let logits = d.forward(&containers, Mode::Train);
        let (gl, g_logits) = bce_with_logits(&logits, &vec![1.0; batch.len()]);
        let g_gan = d.backward(&g_logits);
        d.zero_grad();
        g_c.scaled_add(weights.lambda_gan as f32, &g_gan);
        g_loss = gl;
    }
    hnet.backward(&g_c);
    Ok(BranchOutcome { h_loss, r_loss, containers, covers: cover_t, g_loss })
}

fn discriminator_step(
    d: &mut Adversary,
    opt: &mut Optimizer<f32>,
    real: &Tensor<f32>,
    fake: &Tensor<f32>,
    step: usize,
) -> f64 {
    let n = real.dim().0;
    let (l_real, g) = bce_with_logits(&d.forward(real, Mode::Train), &vec![1.0; n]);
    d.backward(&g);
    let (l_fake, g) = bce_with_logits(&d.forward(fake, Mode::Train), &vec![0.0; fake.dim().0]);
    d.backward(&g);
    opt.step(d, step);
    0.5 * (l_real + l_fake)
}

/// Options for where training writes checkpoints.
#[derive(Clone, Debug, Default)]
pub struct TrainOutput {
    pub dir: Option<PathBuf>,
}

/// Jointly trains both H/R branches. Reference frames and residual frames
/// each form their own stream; every step draws `batch_size` frames from
/// each. The returned bundle holds the weights with the best validation loss.
pub fn train_hr(
    train: &[ClipPair],
    val: &[ClipPair],
    cfg: &TrainConfig,
    out: &TrainOutput,
) -> Result<(ModelBundle, TrainReport)> {
    train_joint(train, val, cfg, out, false)
}

/// As [`train_hr`], with a discriminator separating covers from containers
/// whose non-saturating generator loss, scaled by `lambda_gan`, reaches the
/// H-nets.
pub fn train_hr_gan(
    train: &[ClipPair],
    val: &[ClipPair],
    cfg: &TrainConfig,
    out: &TrainOutput,
) -> Result<(ModelBundle, TrainReport)> {
    train_joint(train, val, cfg, out, true)
}

fn train_joint(
    train: &[ClipPair],
    val: &[ClipPair],
    cfg: &TrainConfig,
    out: &TrainOutput,
    gan: bool,
) -> Result<(ModelBundle, TrainReport)> {
    cfg.validate()?;
    let data = build_hiding_data(train, cfg.threshold)?;
    if data.reference.is_empty() && data.residual.is_empty() {
        return Err(Error::EmptyDataset("no training frames"));
    }
    let val_full = if val.is_empty() { data.clone() } else { build_hiding_data(val, cfg.threshold)? };
    let val_data = HidingData {
        reference: spread(&val_full.reference, cfg.val_frames),
        residual: spread(&val_full.residual, cfg.val_frames),
    };

    let mut bundle = ModelBundle::new(cfg.arch.clone(), cfg.seed);
    let mut disc = gan.then(|| ModelBundle::new_discriminator(&cfg.arch, cfg.seed));
    let schedule = cfg.schedule();
    let mut opts: Vec<Optimizer<f32>> = (0..4).map(|_| cfg.optimizer(schedule)).collect();
    let mut d_opt = cfg.optimizer(schedule);
    let mut rng: ChaCha8Rng = rng_for(cfg.seed, "batches");

    let initial = validate_hiding(&bundle, &val_data, cfg.weights.beta_reveal)?;
    let mut report = TrainReport {
        initial_val_apd_container: initial.apd_container,
        best_val_loss: f64::INFINITY,
        ..Default::default()
    };
    let mut best: Option<Vec<StateDict>> = None;

    for step in 0..cfg.max_steps {
        let mut row = TrainLogRow { step, ..Default::default() };
        let (mut h_sum, mut r_sum, mut g_sum, mut branches) = (0.0, 0.0, 0.0, 0.0);
        let mut reals = Vec::new();
        let mut fakes = Vec::new();
        for label in [FrameLabel::Reference, FrameLabel::Residual] {
            let pool = data.branch(label);
            if pool.is_empty() {
                continue;
            }
            let batch: Vec<&HidingSample> = (0..cfg.batch_size).map(|_| pool.choose(&mut rng).unwrap()).collect();
            let o = branch_step(&mut bundle, label, &batch, &cfg.weights, disc.as_mut())?;
            h_sum += o.h_loss;
            r_sum += o.r_loss;
            g_sum += o.g_loss;
            branches += 1.0;
            reals.push(o.covers);
            fakes.push(o.containers);
        }
        row.h_loss = h_sum / branches;
        row.r_loss = r_sum / branches;
        if !row.h_loss.is_finite() || !row.r_loss.is_finite() {
            return Err(Error::NonFiniteLoss { step, h_loss: row.h_loss, r_loss: row.r_loss });
        }
        let nets: [&mut dyn Layer<f32>; 4] =
            [&mut bundle.ref_hnet, &mut bundle.res_hnet, &mut bundle.ref_rnet, &mut bundle.res_rnet];
        for (net, opt) in nets.into_iter().zip(&mut opts) {
            opt.step(net, step);
        }
        if let Some(d) = disc.as_mut() {
            let cat = |ts: &[Tensor<f32>]| {
                ndarray::concatenate(ndarray::Axis(0), &ts.iter().map(|t| t.view()).collect::<Vec<_>>()).unwrap()
            };
            row.gan_d_loss = Some(discriminator_step(d, &mut d_opt, &cat(&reals), &cat(&fakes), step));
            row.gan_g_loss = Some(g_sum / branches);
        }
        bundle.state.hr_steps = step + 1;

        let last = step + 1 == cfg.max_steps;
        if (step + 1) % cfg.val_interval == 0 || last {
            let m = validate_hiding(&bundle, &val_data, cfg.weights.beta_reveal)?;
            row.val_apd_container = Some(m.apd_container);
            row.val_apd_secret = Some(m.apd_secret);
            info!(
                "step {} h {:.4} r {:.4} val apd {:.2}/{:.2}",
                step + 1,
                row.h_loss,
                row.r_loss,
                m.apd_container,
                m.apd_secret
            );
            if m.loss < report.best_val_loss {
                report.best_val_loss = m.loss;
                report.best_step = step + 1;
                best = Some(snapshot(&bundle));
                if let Some(dir) = &out.dir {
                    let path = dir.join("best.safetensors");
                    save_bundle(&bundle, &cfg.digest(), &path)?;
                    report.best_checkpoint = Some(path);
                }
            }
        }
        if let (Some(dir), Some(every)) = (&out.dir, cfg.checkpoint_interval) {
            if every > 0 && (step + 1) % every == 0 {
                save_bundle(&bundle, &cfg.digest(), &dir.join(format!("step{:06}.safetensors", step + 1)))?;
            }
        }
        report.log.push(row);
    }
    if let Some(snap) = best {
        restore(&mut bundle, &snap);
        bundle.state.hr_steps = report.best_step;
    }
    bundle.discriminator = disc;
    Ok((bundle, report))
}

/// One decoded output with its RoR class.
#[derive(Clone, Debug)]
pub struct RorSample {
    pub decoded: Frame,
    pub class: RorClass,
    /// Index of the container this output came from.
    pub container: usize,
}

/// Hides every sample with its own branch and decodes each container with
/// both R-nets, giving one real and one fake output per container.
pub fn collect_ror_samples(bundle: &ModelBundle, data: &HidingData) -> Result<Vec<RorSample>> {
    let mut out = Vec::new();
    let mut container_idx = 0;
    for hidden in [FrameLabel::Reference, FrameLabel::Residual] {
        let samples = data.branch(hidden);
        if samples.is_empty() {
            continue;
        }
        let covers: Vec<&Frame> = samples.iter().map(|s| &s.cover).collect();
        let payloads: Vec<&Frame> = samples.iter().map(|s| &s.payload).collect();
        let containers = bundle.hide(hidden, &covers, &payloads)?;
        let refs: Vec<&Frame> = containers.iter().collect();
        let by_ref = bundle.reveal(FrameLabel::Reference, &refs)?;
        let by_res = bundle.reveal(FrameLabel::Residual, &refs)?;
        for (a, b) in by_ref.into_iter().zip(by_res) {
            out.push(RorSample {
                decoded: a,
                class: RorClass::of(FrameLabel::Reference, hidden),
                container: container_idx,
            });
            out.push(RorSample {
                decoded: b,
                class: RorClass::of(FrameLabel::Residual, hidden),
                container: container_idx,
            });
            container_idx += 1;
        }
    }
    Ok(out)
}

/// Equal numbers of reference and residual samples, taken evenly from each.
pub fn balanced(data: &HidingData, per_branch: Option<usize>) -> HidingData {
    let n = data.reference.len().min(data.residual.len());
    let n = per_branch.map_or(n, |p| p.min(n));
    HidingData { reference: spread(&data.reference, n), residual: spread(&data.residual, n) }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RorReport {
    pub losses: Vec<f64>,
    pub heldout_accuracy: f64,
    pub heldout_samples: usize,
}

/// Fraction of samples whose most probable class is the true one.
pub fn ror_accuracy(bundle: &ModelBundle, samples: &[RorSample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let frames: Vec<&Frame> = samples.iter().map(|s| &s.decoded).collect();
    let probs = bundle.classify(&frames)?;
    let hits = probs.iter().zip(samples).filter(|(p, s)| argmax(&p[..]) == s.class.index()).count();
    Ok(hits as f64 / samples.len() as f64)
}

pub fn argmax(p: &[f64]) -> usize {
    p.iter().enumerate().fold(0, |best, (i, v)| if *v > p[best] { i } else { best })
}

/// Both outputs of `batch_size` random containers from each branch.
fn ror_batch(by_branch: &[Vec<RorSample>], batch_size: usize, rng: &mut impl Rng) -> Result<(Tensor<f32>, Vec<usize>)> {
    let mut frames = Vec::new();
    let mut labels = Vec::new();
    for pool in by_branch {
        let containers = pool.len() / 2;
        for _ in 0..batch_size {
            let k = rng.random_range(0..containers);
            for s in &pool[2 * k..2 * k + 2] {
                frames.push(&s.decoded);
                labels.push(s.class.index());
            }
        }
    }
    Ok((frames_to_tensor(&frames)?, labels))
}

/// Trains the RoR classifier of a bundle whose H/R networks are frozen.
/// Batches hold equal numbers of reference and residual containers.
pub fn train_ror(
    bundle: &mut ModelBundle,
    train: &[ClipPair],
    heldout: &[ClipPair],
    cfg: &TrainConfig,
) -> Result<RorReport> {
    bundle.require_hr_trained()?;
    let data = build_hiding_data(train, cfg.threshold)?;
    if data.reference.is_empty() || data.residual.is_empty() {
        return Err(Error::EmptyDataset("RoR training needs both reference and residual frames"));
    }
    let mut by_branch = Vec::new();
    for label in [FrameLabel::Reference, FrameLabel::Residual] {
        let only = HidingData {
            reference: if label == FrameLabel::Reference { data.reference.clone() } else { vec![] },
            residual: if label == FrameLabel::Residual { data.residual.clone() } else { vec![] },
        };
        by_branch.push(collect_ror_samples(bundle, &only)?);
    }
    let mut rng = rng_for(cfg.seed, "ror");
    if cfg.ror.shuffle_labels {
        let mut classes: Vec<RorClass> = by_branch.iter().flatten().map(|s| s.class).collect();
        classes.shuffle(&mut rng);
        for (s, c) in by_branch.iter_mut().flatten().zip(classes) {
            s.class = c;
        }
    }
    let schedule = LrSchedule { base: cfg.ror.learning_rate, factor: 1.0, interval: usize::MAX };
    let mut opt = cfg.optimizer(schedule);
    let mut report = RorReport::default();
    for step in 0..cfg.ror.max_steps {
        let (x, labels) = ror_batch(&by_branch, cfg.ror.batch_size, &mut rng)?;
        check_classifier_input(&bundle.arch, &x)?;
        let logits = bundle.ror_net.forward(&x, Mode::Train);
        let (loss, g) = cross_entropy(&logits, &labels);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step, h_loss: f64::NAN, r_loss: loss });
        }
        bundle.ror_net.backward(&g);
        opt.step(&mut bundle.ror_net, step);
        report.losses.push(loss);
    }
    for _ in 0..cfg.ror.recalibration_batches {
        let (x, _) = ror_batch(&by_branch, cfg.ror.batch_size, &mut rng)?;
        bundle.ror_net.forward(&x, Mode::Train);
    }
    bundle.state.ror_steps = cfg.ror.max_steps;
    let held = if heldout.is_empty() { data } else { build_hiding_data(heldout, cfg.threshold)? };
    let held_samples = collect_ror_samples(bundle, &balanced(&held, None))?;
    report.heldout_accuracy = ror_accuracy(bundle, &held_samples)?;
    report.heldout_samples = held_samples.len();
    Ok(report)
}

/// Labelled images for a binary classifier: `true` for covers.
#[derive(Clone, Debug)]
pub struct BinarySample {
    pub frame: Frame,
    pub is_cover: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversaryConfig {
    pub base: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Passes over the leaked samples.
    pub epochs: usize,
    /// Upper bound on optimizer steps regardless of budget.
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        Self { base: 8, learning_rate: 1e-3, batch_size: 8, epochs: 6, max_steps: 600, seed: 0 }
    }
}

/// Trains a fresh adversary on `train` and returns it.
pub fn train_adversary(train: &[BinarySample], frame_size: (usize, usize), cfg: &AdversaryConfig) -> Result<Adversary> {
    let arch = ArchConfig { adversary_base: cfg.base, frame_size, ..ArchConfig::toy() };
    let mut d = ModelBundle::new_discriminator(&arch, cfg.seed);
    if train.is_empty() {
        return Ok(d);
    }
    let mut rng = rng_for(cfg.seed, "adversary");
    let steps = (cfg.epochs * train.len()).div_ceil(cfg.batch_size).min(cfg.max_steps);
    let mut opt = Optimizer::Adam(Adam::new(LrSchedule::constant(cfg.learning_rate)));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();
    for step in 0..steps {
        let mut idx = Vec::with_capacity(cfg.batch_size);
        while idx.len() < cfg.batch_size.min(train.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let frames: Vec<&Frame> = idx.iter().map(|&i| &train[i].frame).collect();
        let targets: Vec<f64> = idx.iter().map(|&i| if train[i].is_cover { 1.0 } else { 0.0 }).collect();
        let logits = d.forward(&frames_to_tensor(&frames)?, Mode::Train);
        let (_, g) = bce_with_logits(&logits, &targets);
        d.backward(&g);
        opt.step(&mut d, step);
    }
    Ok(d)
}

/// Fraction of samples the adversary classifies correctly (cover iff the
/// predicted cover probability is at least 0.5).
pub fn adversary_accuracy(d: &Adversary, samples: &[BinarySample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for chunk in samples.chunks(16) {
        let frames: Vec<&Frame> = chunk.iter().map(|s| &s.frame).collect();
        let logits = d.infer(&frames_to_tensor(&frames)?);
        for (i, s) in chunk.iter().enumerate() {
            if (logits[[i, 0, 0, 0]] >= 0.0) == s.is_cover {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn micro() -> ArchConfig {
        ArchConfig { hnet_base: 2, rnet_width: 2, ror_base: 2, adversary_base: 2, frame_size: (128, 128) }
    }

    fn noise(seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Frame::from_fn(128, 128, |_, _, _| rng.random()).unwrap()
    }

    fn sample(seed: u64) -> HidingSample {
        let s = noise(seed + 1);
        HidingSample {
            label: FrameLabel::Reference,
            cover: noise(seed),
            payload: s.clone(),
            secret: s,
            reference: None,
        }
    }

    fn hnet_grads(bundle: &ModelBundle) -> Vec<f32> {
        let mut g = Vec::new();
        bundle.ref_hnet.visit(&mut |_, p| g.extend_from_slice(&p.grad));
        g
    }

    fn grads_with(beta: f64, perturb_rnet: bool) -> Vec<f32> {
        let mut bundle = ModelBundle::new(micro(), 3);
        if perturb_rnet {
            bundle.ref_rnet.visit_mut(&mut |_, p| p.value.iter_mut().for_each(|v| *v = -*v * 2.0));
        }
        let batch = [sample(1), sample(2)];
        let refs: Vec<&HidingSample> = batch.iter().collect();
        let weights = LossWeights { beta_reveal: beta, lambda_gan: 0.0 };
        branch_step(&mut bundle, FrameLabel::Reference, &refs, &weights, None).unwrap();
        hnet_grads(&bundle)
    }

    #[test]
    fn zero_beta_cuts_the_reveal_path() {
        assert_eq!(grads_with(0.0, false), grads_with(0.0, true));
        assert_ne!(grads_with(1.0, false), grads_with(1.0, true));
    }

    #[test]
    fn hiding_loss_is_apd_over_255() {
        let (a, b) = (noise(4), noise(5));
        let l = hiding_loss(&a, &b).unwrap();
        assert!((l - apd(&a, &b).unwrap() / 255.0).abs() < 1e-9);
        assert_eq!(hiding_loss(&a, &a).unwrap(), 0.0);
        let gap = hiding_loss(&Frame::filled(4, 4, 0.6), &Frame::filled(4, 4, 0.5)).unwrap();
        assert!((gap - 0.1).abs() < 1e-6);
    }

    #[test]
    fn midpoint_decoder_scores_zero_on_static_residual() {
        let f = noise(6);
        let target = compute_residual(&f, &f).unwrap().into_frame();
        assert_eq!(reveal_loss(&Frame::filled(128, 128, 0.5), &target).unwrap(), 0.0);
    }

    #[test]
    fn loss_dimension_mismatch() {
        assert!(matches!(
            hiding_loss(&Frame::filled(4, 4, 0.0), &Frame::filled(4, 5, 0.0)),
            Err(Error::DimensionMismatch(..))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { decay_factor: 0.0, ..TrainConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = TrainConfig { learning_rate: -1.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let text = toml::to_string(&TrainConfig::default()).unwrap();
        assert_eq!(TrainConfig::from_toml(&text).unwrap(), TrainConfig::default());
        assert!(TrainConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn default_schedule_decays_every_third() {
        let s = TrainConfig { max_steps: 900, ..TrainConfig::default() }.schedule();
        assert_eq!(s.interval, 300);
        assert_eq!(s.factor, 0.1);
    }

    #[test]
    fn argmax_prefers_first_of_ties() {
        assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.1]), 1);
        assert_eq!(argmax(&[0.7, 0.1, 0.1, 0.1]), 0);
    }
}
