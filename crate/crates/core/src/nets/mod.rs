//! Hiding, reveal and classifier networks and the bundle that holds them.

mod checkpoint;
mod classifier;
mod hnet;
mod rnet;

pub use checkpoint::{architecture_hash, load_bundle, save_bundle, CheckpointMeta};
pub use classifier::{ConvClassifier, CLASSIFIER_CONVS};
pub use hnet::{HNet, HNetTrace, ENCODER_STAGES, LEAKY_SLOPE};
pub use rnet::{MultiKernel, RNet, REVEAL_BLOCKS};

use ndarray::{s, Array4};
use serde::{Deserialize, Serialize};
use vidsteg_nn::loss::softmax;
use vidsteg_nn::{Layer, Tensor};

use crate::error::{Error, Result};
use crate::labeling::FrameLabel;
use crate::media::Frame;
use crate::seed::rng_for;

/// H-net spatial sizes must survive seven halvings.
pub const HNET_MULTIPLE: usize = 128;

/// Frames pushed through a network at once during inference.
const INFER_CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Width of the first H-net encoder stage.
    pub hnet_base: usize,
    /// Channels of each kernel path inside an R-net block.
    pub rnet_width: usize,
    /// Width of the first RoR conv stage.
    pub ror_base: usize,
    /// Width of the first adversary / discriminator conv stage.
    pub adversary_base: usize,
    /// `(height, width)` expected by the classifiers.
    pub frame_size: (usize, usize),
}

impl ArchConfig {
    /// Full-width networks.
    pub fn paper() -> Self {
        Self { hnet_base: 64, rnet_width: 50, ror_base: 32, adversary_base: 32, frame_size: (128, 128) }
    }

    /// Reduced widths for CPU-scale training on 128x128 frames.
    pub fn toy() -> Self {
        Self { hnet_base: 8, rnet_width: 8, ror_base: 8, adversary_base: 8, frame_size: (128, 128) }
    }
}

/// The four decoded-output categories of the RoR classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RorClass {
    RealReference = 0,
    FakeReference = 1,
    RealResidual = 2,
    FakeResidual = 3,
}

impl RorClass {
    pub const ALL: [RorClass; 4] =
        [RorClass::RealReference, RorClass::FakeReference, RorClass::RealResidual, RorClass::FakeResidual];

    /// Class of the output of the `decoder` R-net when the container hides a
    /// frame of kind `hidden`.
    pub fn of(decoder: FrameLabel, hidden: FrameLabel) -> Self {
        match (decoder, hidden) {
            (FrameLabel::Reference, FrameLabel::Reference) => RorClass::RealReference,
            (FrameLabel::Reference, FrameLabel::Residual) => RorClass::FakeReference,
            (FrameLabel::Residual, FrameLabel::Residual) => RorClass::RealResidual,
            (FrameLabel::Residual, FrameLabel::Reference) => RorClass::FakeResidual,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

pub type Adversary = ConvClassifier<f32>;

/// Training progress recorded with the bundle.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleState {
    pub hr_steps: usize,
    pub ror_steps: usize,
}

/// The five pipeline networks plus an optional GAN discriminator. Every
/// network owns its own parameters.
pub struct ModelBundle {
    pub arch: ArchConfig,
    pub ref_hnet: HNet<f32>,
    pub res_hnet: HNet<f32>,
    pub ref_rnet: RNet<f32>,
    pub res_rnet: RNet<f32>,
    pub ror_net: ConvClassifier<f32>,
    pub discriminator: Option<Adversary>,
    pub state: BundleState,
}

impl ModelBundle {
    pub fn new(arch: ArchConfig, seed: u64) -> Self {
        Self {
            ref_hnet: HNet::new(&mut rng_for(seed, "ref_hnet"), arch.hnet_base),
            res_hnet: HNet::new(&mut rng_for(seed, "res_hnet"), arch.hnet_base),
            ref_rnet: RNet::new(&mut rng_for(seed, "ref_rnet"), arch.rnet_width),
            res_rnet: RNet::new(&mut rng_for(seed, "res_rnet"), arch.rnet_width),
            ror_net: ConvClassifier::new(&mut rng_for(seed, "ror_net"), arch.ror_base, arch.frame_size, 4),
            discriminator: None,
            state: BundleState::default(),
            arch,
        }
    }

    pub fn new_discriminator(arch: &ArchConfig, seed: u64) -> Adversary {
        ConvClassifier::new(&mut rng_for(seed, "discriminator"), arch.adversary_base, arch.frame_size, 1)
    }

    pub fn with_discriminator(mut self, seed: u64) -> Self {
        self.discriminator = Some(Self::new_discriminator(&self.arch, seed));
        self
    }

    pub fn hnet(&self, branch: FrameLabel) -> &HNet<f32> {
        match branch {
            FrameLabel::Reference => &self.ref_hnet,
            FrameLabel::Residual => &self.res_hnet,
        }
    }

    pub fn rnet(&self, branch: FrameLabel) -> &RNet<f32> {
        match branch {
            FrameLabel::Reference => &self.ref_rnet,
            FrameLabel::Residual => &self.res_rnet,
        }
    }

    /// Named networks in checkpoint order.
    pub fn networks(&self) -> Vec<(&'static str, &dyn Layer<f32>)> {
        let mut v: Vec<(&'static str, &dyn Layer<f32>)> = vec![
            ("ref_hnet", &self.ref_hnet),
            ("res_hnet", &self.res_hnet),
            ("ref_rnet", &self.ref_rnet),
            ("res_rnet", &self.res_rnet),
            ("ror_net", &self.ror_net),
        ];
        if let Some(d) = &self.discriminator {
            v.push(("discriminator", d));
        }
        v
    }

    pub fn networks_mut(&mut self) -> Vec<(&'static str, &mut dyn Layer<f32>)> {
        let mut v: Vec<(&'static str, &mut dyn Layer<f32>)> = vec![
            ("ref_hnet", &mut self.ref_hnet),
            ("res_hnet", &mut self.res_hnet),
            ("ref_rnet", &mut self.ref_rnet),
            ("res_rnet", &mut self.res_rnet),
            ("ror_net", &mut self.ror_net),
        ];
        if let Some(d) = &mut self.discriminator {
            v.push(("discriminator", d));
        }
        v
    }

    pub fn require_hr_trained(&self) -> Result<()> {
        if self.state.hr_steps == 0 {
            return Err(Error::Untrained("hiding/reveal networks"));
        }
        Ok(())
    }

    pub fn require_ror_trained(&self) -> Result<()> {
        if self.state.ror_steps == 0 {
            return Err(Error::Untrained("RoR network"));
        }
        Ok(())
    }

    /// Hides `payloads[i]` (a secret frame or an encoded residual) into
    /// `covers[i]` with the H-net of `branch`.
    pub fn hide(&self, branch: FrameLabel, covers: &[&Frame], payloads: &[&Frame]) -> Result<Vec<Frame>> {
        if covers.len() != payloads.len() {
            return Err(Error::LengthMismatch(covers.len(), payloads.len()));
        }
        let mut out = Vec::with_capacity(covers.len());
        for (cs, ps) in covers.chunks(INFER_CHUNK).zip(payloads.chunks(INFER_CHUNK)) {
            let x = hnet_input(cs, ps)?;
            out.extend(tensor_to_frames(&self.hnet(branch).infer(&x))?);
        }
        Ok(out)
    }

    /// Runs the R-net of `branch` over every container.
    pub fn reveal(&self, branch: FrameLabel, containers: &[&Frame]) -> Result<Vec<Frame>> {
        let mut out = Vec::with_capacity(containers.len());
        for cs in containers.chunks(INFER_CHUNK) {
            out.extend(tensor_to_frames(&self.rnet(branch).infer(&frames_to_tensor(cs)?))?);
        }
        Ok(out)
    }

    /// RoR class probabilities for every decoded frame.
    pub fn classify(&self, decoded: &[&Frame]) -> Result<Vec<[f64; 4]>> {
        let mut out = Vec::with_capacity(decoded.len());
        for ds in decoded.chunks(INFER_CHUNK) {
            let x = frames_to_tensor(ds)?;
            check_classifier_input(&self.arch, &x)?;
            let p = softmax(&self.ror_net.infer(&x));
            out.extend(p.rows().into_iter().map(|r| [r[0], r[1], r[2], r[3]]));
        }
        Ok(out)
    }
}

pub fn check_classifier_input(arch: &ArchConfig, x: &Tensor<f32>) -> Result<()> {
    let (_, _, h, w) = x.dim();
    if (h, w) != arch.frame_size {
        return Err(Error::DimensionMismatch(arch.frame_size, (h, w)));
    }
    Ok(())
}

/// Stacks frames into an `[N, 3, H, W]` tensor.
pub fn frames_to_tensor(frames: &[&Frame]) -> Result<Tensor<f32>> {
    let Some(first) = frames.first() else {
        return Ok(Array4::zeros((0, 3, 0, 0)));
    };
    let (h, w) = first.dims();
    let mut t = Array4::zeros((frames.len(), 3, h, w));
    for (i, f) in frames.iter().enumerate() {
        if f.dims() != (h, w) {
            return Err(Error::DimensionMismatch((h, w), f.dims()));
        }
        t.slice_mut(s![i, .., .., ..]).assign(f.pixels());
    }
    Ok(t)
}

/// `[N, 6, H, W]` H-net input: cover channels followed by payload channels.
pub fn hnet_input(covers: &[&Frame], payloads: &[&Frame]) -> Result<Tensor<f32>> {
    if covers.len() != payloads.len() {
        return Err(Error::LengthMismatch(covers.len(), payloads.len()));
    }
    for (c, p) in covers.iter().zip(payloads) {
        if c.dims() != p.dims() {
            return Err(Error::DimensionMismatch(c.dims(), p.dims()));
        }
        let (h, w) = c.dims();
        if h % HNET_MULTIPLE != 0 || w % HNET_MULTIPLE != 0 {
            return Err(Error::NotMultipleOf128(h, w));
        }
    }
    let c = frames_to_tensor(covers)?;
    let p = frames_to_tensor(payloads)?;
    Ok(vidsteg_nn::tensor::concat_channels(&c, &p))
}

pub fn tensor_to_frames(t: &Tensor<f32>) -> Result<Vec<Frame>> {
    let n = t.dim().0;
    (0..n).map(|i| Frame::from_clamped(t.slice(s![i, .., .., ..]).to_owned())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(v: f32) -> Frame {
        Frame::filled(128, 128, v)
    }

    #[test]
    fn bundle_networks_are_disjoint_objects() {
        let b = ModelBundle::new(
            ArchConfig { hnet_base: 2, rnet_width: 2, ror_base: 2, adversary_base: 2, frame_size: (128, 128) },
            0,
        );
        let names: Vec<_> = b.networks().iter().map(|(n, _)| *n).collect();
        assert_eq!(names, ["ref_hnet", "res_hnet", "ref_rnet", "res_rnet", "ror_net"]);
        assert_ne!(b.ref_hnet.state_dict(), b.res_hnet.state_dict());
    }

    #[test]
    fn hide_rejects_bad_sizes() {
        let b = ModelBundle::new(
            ArchConfig { hnet_base: 1, rnet_width: 1, ror_base: 1, adversary_base: 1, frame_size: (128, 128) },
            0,
        );
        let small = Frame::filled(64, 64, 0.5);
        let err = b.hide(FrameLabel::Reference, &[&small], &[&small]).unwrap_err();
        assert!(matches!(err, Error::NotMultipleOf128(64, 64)));
        let err = b.hide(FrameLabel::Reference, &[&gray(0.1)], &[]).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch(1, 0)));
    }

    #[test]
    fn classify_sums_to_one() {
        let b = ModelBundle::new(
            ArchConfig { hnet_base: 1, rnet_width: 1, ror_base: 2, adversary_base: 1, frame_size: (128, 128) },
            5,
        );
        let frames = [gray(0.2), gray(0.9)];
        let refs: Vec<&Frame> = frames.iter().collect();
        let p = b.classify(&refs).unwrap();
        for row in &p {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
        assert_eq!(p, b.classify(&refs).unwrap());
    }

    #[test]
    fn ror_class_table() {
        use FrameLabel::*;
        assert_eq!(RorClass::of(Reference, Reference).index(), 0);
        assert_eq!(RorClass::of(Reference, Residual).index(), 1);
        assert_eq!(RorClass::of(Residual, Residual).index(), 2);
        assert_eq!(RorClass::of(Residual, Reference).index(), 3);
    }
}
