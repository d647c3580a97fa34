//! Reference/residual labeling by APD thresholding, segments, and the
//! reversible residual encoding.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use ndarray::Zip;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{apd, Frame, VideoClip};

pub const DEFAULT_THRESHOLD: f64 = 30.68;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameLabel {
    Reference,
    Residual,
}

impl fmt::Display for FrameLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrameLabel::Reference => "reference",
            FrameLabel::Residual => "residual",
        })
    }
}

#[derive(Clone, Debug)]
pub struct LabeledClip {
    pub clip: Arc<VideoClip>,
    pub labels: Vec<FrameLabel>,
    /// Index of the governing reference for every frame.
    pub reference_index: Vec<usize>,
    /// APD of every frame to its governing reference (0 for references).
    pub reference_apd: Vec<f64>,
}

impl LabeledClip {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn reference_count(&self) -> usize {
        self.labels.iter().filter(|l| **l == FrameLabel::Reference).count()
    }

    pub fn residual_count(&self) -> usize {
        self.len() - self.reference_count()
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold.is_finite() && threshold > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidThreshold(threshold))
    }
}

/// Scans frames in order; a frame whose APD to the current reference exceeds
/// `threshold` becomes the new reference.
pub fn label_frames(frames: &[Frame], threshold: f64) -> Result<(Vec<FrameLabel>, Vec<usize>, Vec<f64>)> {
    check_threshold(threshold)?;
    let mut labels = Vec::with_capacity(frames.len());
    let mut refs = Vec::with_capacity(frames.len());
    let mut dists = Vec::with_capacity(frames.len());
    let mut current = 0;
    for (i, f) in frames.iter().enumerate() {
        if i == 0 {
            labels.push(FrameLabel::Reference);
            refs.push(0);
            dists.push(0.0);
            continue;
        }
        let d = apd(f, &frames[current])?;
        if d > threshold {
            current = i;
            labels.push(FrameLabel::Reference);
            dists.push(0.0);
        } else {
            labels.push(FrameLabel::Residual);
            dists.push(d);
        }
        refs.push(current);
    }
    Ok((labels, refs, dists))
}

pub fn label_clip(clip: Arc<VideoClip>, threshold: f64) -> Result<LabeledClip> {
    if clip.is_empty() {
        return Err(Error::EmptyClip(clip.id().to_string()));
    }
    let (labels, reference_index, reference_apd) = label_frames(clip.frames(), threshold)?;
    Ok(LabeledClip { clip, labels, reference_index, reference_apd })
}

/// Signed difference `d` in `[-1, 1]` stored as `(d + 1) / 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualPlane(Frame);

impl ResidualPlane {
    /// Wraps an already encoded plane, e.g. the output of a residual R-net.
    pub fn from_encoded(values: Frame) -> Self {
        Self(values)
    }

    pub fn as_frame(&self) -> &Frame {
        &self.0
    }

    pub fn into_frame(self) -> Frame {
        self.0
    }
}

pub fn compute_residual(frame: &Frame, reference: &Frame) -> Result<ResidualPlane> {
    if frame.dims() != reference.dims() {
        return Err(Error::DimensionMismatch(frame.dims(), reference.dims()));
    }
    let values =
        Zip::from(frame.pixels()).and(reference.pixels()).map_collect(|&f, &r| ((f - r + 1.0) * 0.5).clamp(0.0, 1.0));
    Ok(ResidualPlane(Frame::new(values)?))
}

pub fn reconstruct_frame(residual: &ResidualPlane, reference: &Frame) -> Result<Frame> {
    let v = residual.as_frame();
    if v.dims() != reference.dims() {
        return Err(Error::DimensionMismatch(v.dims(), reference.dims()));
    }
    let values =
        Zip::from(v.pixels()).and(reference.pixels()).map_collect(|&v, &r| (r + (2.0 * v - 1.0)).clamp(0.0, 1.0));
    Frame::new(values)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub reference: usize,
    pub residuals: Vec<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        1 + self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn segments_from_labels(labels: &[FrameLabel]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match (l, out.last_mut()) {
            (FrameLabel::Residual, Some(seg)) => seg.residuals.push(i),
            _ => out.push(Segment { reference: i, residuals: Vec::new() }),
        }
    }
    out
}

pub fn segments_of(labeled: &LabeledClip) -> Vec<Segment> {
    segments_from_labels(&labeled.labels)
}

/// Segment length -> number of segments.
pub fn segment_histogram<'a>(segments: impl IntoIterator<Item = &'a Segment>) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for s in segments {
        *hist.entry(s.len()).or_insert(0) += 1;
    }
    hist
}

#[derive(Debug, Serialize)]
struct LabelRow<'a> {
    clip_id: &'a str,
    frame_idx: usize,
    label: FrameLabel,
    reference_idx: usize,
}

pub fn write_labels_csv(clips: &[LabeledClip], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for c in clips {
        for (i, (label, r)) in c.labels.iter().zip(&c.reference_index).enumerate() {
            w.serialize(LabelRow { clip_id: c.clip.id(), frame_idx: i, label: *label, reference_idx: *r })?;
        }
    }
    w.flush().map_err(Error::io(path))?;
    Ok(())
}

pub fn write_histogram_csv(hist: &BTreeMap<usize, usize>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["length", "count"])?;
    for (len, count) in hist {
        w.write_record([len.to_string(), count.to_string()])?;
    }
    w.flush().map_err(Error::io(path))?;
    Ok(())
}
