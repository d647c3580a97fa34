//! End-to-end hiding of a secret clip inside a cover clip, blind decoding of
//! container clips with the RoR decision rule, and APD evaluation.

use std::path::Path;
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::{compute_residual, label_clip, reconstruct_frame, FrameLabel, LabeledClip, ResidualPlane};
use crate::lsb::{lsb_decode_frames, lsb_encode_frames};
use crate::media::{apd, load_clip, save_frames, ClipPair, Frame, VideoClip};
use crate::nets::{ModelBundle, RorClass};

/// Container frames as transmitted: pixels and nothing else.
#[derive(Clone, Debug, PartialEq)]
pub struct ContainerClip {
    frames: Vec<Frame>,
}

impl ContainerClip {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::EmptyClip("container".into()));
        };
        if let Some(f) = frames.iter().find(|f| f.dims() != first.dims()) {
            return Err(Error::DimensionMismatch(first.dims(), f.dims()));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Reads the numbered PNG frames of `dir`; any other file is ignored.
    pub fn load(dir: &Path) -> Result<Self> {
        Self::new(load_clip(dir)?.frames().to_vec())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_frames(&self.frames, dir)
    }
}

/// Outcome of the paired RoR rule for one container.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoRDecision {
    pub p1: f64,
    pub p2: f64,
    pub verdict: FrameLabel,
}

impl RoRDecision {
    /// `by_ref` and `by_res` are the class probabilities of the reference and
    /// residual R-net outputs for the same container.
    pub fn from_probs(by_ref: &[f64; 4], by_res: &[f64; 4]) -> Self {
        let p1 = by_ref[RorClass::RealReference.index()] + by_res[RorClass::FakeResidual.index()];
        let p2 = by_ref[RorClass::FakeReference.index()] + by_res[RorClass::RealResidual.index()];
        let verdict = if p1 >= p2 { FrameLabel::Reference } else { FrameLabel::Residual };
        Self { p1, p2, verdict }
    }
}

/// Containers plus what the sender knew while producing them.
#[derive(Clone, Debug)]
pub struct EncodedClip {
    pub container: ContainerClip,
    pub labeled: LabeledClip,
    /// What each H-net was given: the secret frame or its encoded residual.
    pub payloads: Vec<Frame>,
}

/// Labels the secret clip and hides frame `t` (or its residual plane) in
/// cover frame `t` with the branch matching its label.
pub fn encode_clip(
    bundle: &ModelBundle,
    cover: &VideoClip,
    secret: Arc<VideoClip>,
    threshold: f64,
) -> Result<EncodedClip> {
    bundle.require_hr_trained()?;
    if cover.len() != secret.len() {
        return Err(Error::LengthMismatch(cover.len(), secret.len()));
    }
    if cover.dims() != secret.dims() {
        return Err(Error::DimensionMismatch(cover.dims(), secret.dims()));
    }
    let labeled = label_clip(Arc::clone(&secret), threshold)?;
    let frames = secret.frames();
    let payloads = labeled
        .labels
        .iter()
        .enumerate()
        .map(|(t, label)| match label {
            FrameLabel::Reference => Ok(frames[t].clone()),
            FrameLabel::Residual => Ok(compute_residual(&frames[t], &frames[labeled.reference_index[t]])?.into_frame()),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut containers: Vec<Option<Frame>> = vec![None; cover.len()];
    for branch in [FrameLabel::Reference, FrameLabel::Residual] {
        let idx: Vec<usize> = (0..cover.len()).filter(|&t| labeled.labels[t] == branch).collect();
        if idx.is_empty() {
            continue;
        }
        let cs: Vec<&Frame> = idx.iter().map(|&t| &cover.frames()[t]).collect();
        let ps: Vec<&Frame> = idx.iter().map(|&t| &payloads[t]).collect();
        for (t, c) in idx.into_iter().zip(bundle.hide(branch, &cs, &ps)?) {
            containers[t] = Some(c);
        }
    }
    let container = ContainerClip::new(containers.into_iter().map(|c| c.expect("every frame has a branch")).collect())?;
    Ok(EncodedClip { container, labeled, payloads })
}

#[derive(Clone, Debug)]
pub struct DecodedClip {
    pub frames: Vec<Frame>,
    pub decisions: Vec<RoRDecision>,
    /// Frames judged residual before any reference was decoded; they were
    /// decoded as references instead.
    pub fallbacks: Vec<usize>,
}

impl DecodedClip {
    pub fn into_clip(self, id: &str) -> Result<VideoClip> {
        VideoClip::new(id, self.frames)
    }
}

/// Sends every container to both R-nets, classifies both outputs with the
/// RoR net and rebuilds the secret in temporal order.
pub fn decode_clip(bundle: &ModelBundle, container: &ContainerClip) -> Result<DecodedClip> {
    bundle.require_hr_trained()?;
    bundle.require_ror_trained()?;
    let refs: Vec<&Frame> = container.frames().iter().collect();
    let by_ref = bundle.reveal(FrameLabel::Reference, &refs)?;
    let by_res = bundle.reveal(FrameLabel::Residual, &refs)?;
    let p_ref = bundle.classify(&by_ref.iter().collect::<Vec<_>>())?;
    let p_res = bundle.classify(&by_res.iter().collect::<Vec<_>>())?;

    let mut frames = Vec::with_capacity(container.len());
    let mut decisions = Vec::with_capacity(container.len());
    let mut fallbacks = Vec::new();
    let mut current: Option<Frame> = None;
    for (t, (ref_out, res_out)) in by_ref.into_iter().zip(by_res).enumerate() {
        let decision = RoRDecision::from_probs(&p_ref[t], &p_res[t]);
        let frame = match (decision.verdict, &current) {
            (FrameLabel::Residual, Some(r)) => reconstruct_frame(&ResidualPlane::from_encoded(res_out), r)?,
            (FrameLabel::Residual, None) => {
                warn!("frame {t} judged residual with no decoded reference; decoding it as a reference");
                fallbacks.push(t);
                current = Some(ref_out.clone());
                ref_out
            }
            (FrameLabel::Reference, _) => {
                current = Some(ref_out.clone());
                ref_out
            }
        };
        frames.push(frame);
        decisions.push(decision);
    }
    Ok(DecodedClip { frames, decisions, fallbacks })
}

/// Compares RoR decisions against the true labels of the containers:
/// `(argmax accuracy over both outputs, P1/P2 verdict accuracy)`.
pub fn verdict_accuracy(bundle: &ModelBundle, containers: &[&Frame], labels: &[FrameLabel]) -> Result<(f64, f64)> {
    if containers.len() != labels.len() {
        return Err(Error::LengthMismatch(containers.len(), labels.len()));
    }
    if containers.is_empty() {
        return Err(Error::EmptyDataset("no containers"));
    }
    let by_ref = bundle.reveal(FrameLabel::Reference, containers)?;
    let by_res = bundle.reveal(FrameLabel::Residual, containers)?;
    let p_ref = bundle.classify(&by_ref.iter().collect::<Vec<_>>())?;
    let p_res = bundle.classify(&by_res.iter().collect::<Vec<_>>())?;
    let (mut argmax_hits, mut verdict_hits) = (0, 0);
    for (t, &hidden) in labels.iter().enumerate() {
        argmax_hits +=
            usize::from(crate::training::argmax(&p_ref[t]) == RorClass::of(FrameLabel::Reference, hidden).index());
        argmax_hits +=
            usize::from(crate::training::argmax(&p_res[t]) == RorClass::of(FrameLabel::Residual, hidden).index());
        verdict_hits += usize::from(RoRDecision::from_probs(&p_ref[t], &p_res[t]).verdict == hidden);
    }
    let n = labels.len() as f64;
    Ok((argmax_hits as f64 / (2.0 * n), verdict_hits as f64 / n))
}

/// One evaluated frame with both APD scores.
#[derive(Clone, Debug)]
pub struct StegoRecord {
    pub cover: Frame,
    pub secret: Frame,
    pub container: Frame,
    pub decoded_secret: Frame,
    pub apd_container_cover: f64,
    pub apd_secret_decoded: f64,
    pub label: FrameLabel,
}

impl StegoRecord {
    pub fn new(
        cover: Frame,
        secret: Frame,
        container: Frame,
        decoded_secret: Frame,
        label: FrameLabel,
    ) -> Result<Self> {
        Ok(Self {
            apd_container_cover: apd(&container, &cover)?,
            apd_secret_decoded: apd(&secret, &decoded_secret)?,
            cover,
            secret,
            container,
            decoded_secret,
            label,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// 4-bit LSB substitution.
    Lsb,
    /// The reference branch applied to every frame.
    Image,
    /// The full reference/residual pipeline with RoR decoding.
    Video,
}

/// Hides `pair.secret` in `pair.cover` with `method` and decodes it again.
pub fn evaluate_pair(
    bundle: Option<&ModelBundle>,
    pair: &ClipPair,
    threshold: f64,
    method: Method,
) -> Result<Vec<StegoRecord>> {
    let covers = pair.cover.frames();
    let secrets = pair.secret.frames();
    let labels = label_clip(Arc::clone(&pair.secret), threshold)?.labels;
    let need = || bundle.ok_or(Error::Untrained("hiding/reveal networks"));
    let (containers, decoded) = match method {
        Method::Lsb => {
            let c = lsb_encode_frames(covers, secrets)?;
            let d = lsb_decode_frames(&c);
            (c, d)
        }
        Method::Image => {
            let b = need()?;
            b.require_hr_trained()?;
            let c =
                b.hide(FrameLabel::Reference, &covers.iter().collect::<Vec<_>>(), &secrets.iter().collect::<Vec<_>>())?;
            let d = b.reveal(FrameLabel::Reference, &c.iter().collect::<Vec<_>>())?;
            (c, d)
        }
        Method::Video => {
            let b = need()?;
            let enc = encode_clip(b, &pair.cover, Arc::clone(&pair.secret), threshold)?;
            let dec = decode_clip(b, &enc.container)?;
            (enc.container.frames, dec.frames)
        }
    };
    covers
        .iter()
        .zip(secrets)
        .zip(containers.into_iter().zip(decoded))
        .zip(labels)
        .map(|(((c, s), (k, d)), l)| StegoRecord::new(c.clone(), s.clone(), k, d, l))
        .collect()
}

/// Per-frame CSV row of an evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub cover_id: String,
    pub secret_id: String,
    pub frame_idx: usize,
    pub label: FrameLabel,
    pub apd_container_cover: f64,
    pub apd_secret_decoded: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub method: Method,
    pub pairs: usize,
    pub frames: usize,
    pub apd_container_cover: f64,
    pub apd_secret_decoded: f64,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub rows: Vec<EvalRow>,
    pub summary: EvalSummary,
}

impl Evaluation {
    /// Mean container APD over frames carrying `label`.
    pub fn mean_container_apd(&self, label: FrameLabel) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.label == label).map(|r| r.apd_container_cover).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
        let mut w = csv::Writer::from_path(dir.join("records.csv"))?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(Error::io(dir))?;
        let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
        w.serialize(&self.summary)?;
        w.flush().map_err(Error::io(dir))?;
        Ok(())
    }
}

/// Evaluates every pair and averages both APD columns over all frames.
pub fn evaluate(
    bundle: Option<&ModelBundle>,
    pairs: &[ClipPair],
    threshold: f64,
    method: Method,
) -> Result<Evaluation> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("no clip pairs to evaluate"));
    }
    let mut rows = Vec::new();
    for pair in pairs {
        for (t, r) in evaluate_pair(bundle, pair, threshold, method)?.into_iter().enumerate() {
            rows.push(EvalRow {
                cover_id: pair.cover.id().to_string(),
                secret_id: pair.secret.id().to_string(),
                frame_idx: t,
                label: r.label,
                apd_container_cover: r.apd_container_cover,
                apd_secret_decoded: r.apd_secret_decoded,
            });
        }
    }
    let n = rows.len() as f64;
    let summary = EvalSummary {
        method,
        pairs: pairs.len(),
        frames: rows.len(),
        apd_container_cover: rows.iter().map(|r| r.apd_container_cover).sum::<f64>() / n,
        apd_secret_decoded: rows.iter().map(|r| r.apd_secret_decoded).sum::<f64>() / n,
    };
    Ok(Evaluation { rows, summary })
}
