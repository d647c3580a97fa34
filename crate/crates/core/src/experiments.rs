//! Analysis harnesses: container probing, adversary leak curves, the
//! cover/secret goodness matrix and the labeling threshold sweep.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::{label_clip, segment_histogram, segments_of, FrameLabel};
use crate::lsb::{lsb_decode_frames, lsb_encode_frames};
use crate::media::{apd, ClipPair, Frame, VideoClip};
use crate::nets::ModelBundle;
use crate::pipeline::encode_clip;
use crate::seed::{derive_seed, rng_for};
use crate::training::{adversary_accuracy, train_adversary, AdversaryConfig, BinarySample};

fn write_csv<R: Serialize>(rows: impl IntoIterator<Item = R>, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(Error::io(path))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    SetWhite,
    ZeroR,
    ZeroG,
    ZeroB,
}

/// A `size`x`size` square with top-left corner `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    pub x: usize,
    pub y: usize,
    pub size: usize,
    pub perturbation: Perturbation,
}

impl Patch {
    fn contains(&self, y: usize, x: usize) -> bool {
        (self.x..self.x + self.size).contains(&x) && (self.y..self.y + self.size).contains(&y)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub patches: Vec<Patch>,
}

impl ProbeSpec {
    pub const PATCH: usize = 16;
    pub const INSET: usize = 8;

    /// Four 16x16 patches inset 8 pixels from the corners: top-left set to
    /// white, the others each zero one colour channel.
    pub fn corners(height: usize, width: usize) -> Self {
        let (s, m) = (Self::PATCH, Self::INSET);
        let far_x = width.saturating_sub(m + s);
        let far_y = height.saturating_sub(m + s);
        let p = |x, y, perturbation| Patch { x, y, size: s, perturbation };
        Self {
            patches: vec![
                p(m, m, Perturbation::SetWhite),
                p(far_x, m, Perturbation::ZeroR),
                p(m, far_y, Perturbation::ZeroG),
                p(far_x, far_y, Perturbation::ZeroB),
            ],
        }
    }

    pub fn covers(&self, y: usize, x: usize) -> bool {
        self.patches.iter().any(|p| p.contains(y, x))
    }

    pub fn apply(&self, frame: &Frame) -> Result<Frame> {
        let (height, width) = frame.dims();
        let mut px = frame.pixels().clone();
        for p in &self.patches {
            if p.x + p.size > width || p.y + p.size > height {
                return Err(Error::PatchOutOfBounds { x: p.x, y: p.y, size: p.size, width, height });
            }
            for y in p.y..p.y + p.size {
                for x in p.x..p.x + p.size {
                    match p.perturbation {
                        Perturbation::SetWhite => (0..3).for_each(|c| px[[c, y, x]] = 1.0),
                        Perturbation::ZeroR => px[[0, y, x]] = 0.0,
                        Perturbation::ZeroG => px[[1, y, x]] = 0.0,
                        Perturbation::ZeroB => px[[2, y, x]] = 0.0,
                    }
                }
            }
        }
        Frame::new(px)
    }
}

/// What turns a container back into a secret during a probe.
#[derive(Clone, Copy)]
pub enum ProbeDecoder<'a> {
    Lsb,
    RNet(&'a ModelBundle, FrameLabel),
}

impl ProbeDecoder<'_> {
    fn decode(&self, frame: &Frame) -> Result<Frame> {
        match self {
            ProbeDecoder::Lsb => Ok(lsb_decode_frames(std::slice::from_ref(frame)).remove(0)),
            ProbeDecoder::RNet(b, branch) => Ok(b.reveal(*branch, &[frame])?.remove(0)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProbeResult {
    /// `|decoded(modified) - decoded(original)|`, `[3, H, W]`.
    pub change_map: Array3<f32>,
    /// Pixels outside every patch with a channel change above 1/255.
    pub changed_outside: usize,
    pub changed_inside: usize,
    pub max_change_outside: f32,
}

impl ProbeResult {
    /// Per-pixel maximum over channels, as an 8-bit heat map.
    pub fn heat_map(&self) -> Result<Frame> {
        let (_, h, w) = self.change_map.dim();
        let peak = self.change_map.iter().copied().fold(0.0f32, f32::max).max(1e-6);
        Frame::from_fn(h, w, |_, y, x| (0..3).map(|c| self.change_map[[c, y, x]]).fold(0.0, f32::max) / peak)
    }
}

pub fn run_probe(decoder: ProbeDecoder<'_>, container: &Frame, spec: &ProbeSpec) -> Result<ProbeResult> {
    let modified = spec.apply(container)?;
    let a = decoder.decode(container)?;
    let b = decoder.decode(&modified)?;
    let change_map = (b.pixels() - a.pixels()).mapv(f32::abs);
    let (_, h, w) = change_map.dim();
    let (mut outside, mut inside, mut max_out) = (0, 0, 0.0f32);
    for y in 0..h {
        for x in 0..w {
            let m = (0..3).map(|c| change_map[[c, y, x]]).fold(0.0, f32::max);
            let changed = m > 1.0 / 255.0;
            if spec.covers(y, x) {
                inside += usize::from(changed);
            } else {
                outside += usize::from(changed);
                max_out = max_out.max(m);
            }
        }
    }
    Ok(ProbeResult { change_map, changed_outside: outside, changed_inside: inside, max_change_outside: max_out })
}

/// The hiding scheme whose containers an adversary tries to detect.
#[derive(Clone, Copy)]
pub enum LeakCodec<'a> {
    Lsb,
    /// The full video pipeline of a trained bundle.
    Model(&'a ModelBundle),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeakConfig {
    /// Numbers of leaked (cover, container) pairs, increasing.
    pub budgets: Vec<usize>,
    /// Share of pairs held out for measuring accuracy.
    pub heldout_fraction: f64,
    pub threshold: f64,
    pub seed: u64,
    /// Independently seeded adversaries averaged per budget.
    pub restarts: usize,
    pub adversary: AdversaryConfig,
}

impl Default for LeakConfig {
    fn default() -> Self {
        Self {
            budgets: vec![50, 100, 200, 400, 800, 1600],
            heldout_fraction: 0.25,
            threshold: crate::labeling::DEFAULT_THRESHOLD,
            seed: 0,
            restarts: 3,
            adversary: AdversaryConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakPoint {
    pub budget: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LeakCurve {
    pub points: Vec<LeakPoint>,
    pub heldout_pairs: usize,
}

impl LeakCurve {
    /// Smallest budget whose accuracy reaches `target`.
    pub fn budget_to_reach(&self, target: f64) -> Option<usize> {
        self.points.iter().find(|p| p.accuracy >= target).map(|p| p.budget)
    }

    /// True when no point falls more than `tolerance` below an earlier one.
    pub fn is_non_decreasing(&self, tolerance: f64) -> bool {
        let mut best = f64::NEG_INFINITY;
        for p in &self.points {
            if p.accuracy < best - tolerance {
                return false;
            }
            best = best.max(p.accuracy);
        }
        true
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(&self.points, path)
    }
}

/// (cover, container) frame pairs produced by `codec` over every clip pair.
pub fn leak_pairs(codec: LeakCodec<'_>, pairs: &[ClipPair], threshold: f64) -> Result<Vec<(Frame, Frame)>> {
    let mut out = Vec::new();
    for pair in pairs {
        let covers = pair.cover.frames();
        let containers = match codec {
            LeakCodec::Lsb => lsb_encode_frames(covers, pair.secret.frames())?,
            LeakCodec::Model(b) => {
                encode_clip(b, &pair.cover, Arc::clone(&pair.secret), threshold)?.container.frames().to_vec()
            }
        };
        out.extend(covers.iter().cloned().zip(containers));
    }
    Ok(out)
}

fn binary(pairs: &[(Frame, Frame)]) -> Vec<BinarySample> {
    pairs
        .iter()
        .flat_map(|(c, k)| {
            [BinarySample { frame: c.clone(), is_cover: true }, BinarySample { frame: k.clone(), is_cover: false }]
        })
        .collect()
}

/// Trains fresh adversaries per budget on the first `n` leaked pairs of a
/// shuffled pool and scores their mean accuracy on a fixed held-out share.
pub fn run_leak_curve(codec: LeakCodec<'_>, pairs: &[ClipPair], cfg: &LeakConfig) -> Result<LeakCurve> {
    if cfg.budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("leak budgets must be strictly increasing".into()));
    }
    if !(0.0..1.0).contains(&cfg.heldout_fraction) {
        return Err(Error::Config("heldout_fraction must be in [0, 1)".into()));
    }
    if cfg.restarts == 0 {
        return Err(Error::Config("restarts must be positive".into()));
    }
    let mut all = leak_pairs(codec, pairs, cfg.threshold)?;
    if all.is_empty() {
        return Err(Error::EmptyDataset("no frames to leak"));
    }
    all.shuffle(&mut rng_for(cfg.seed, "leak-split"));
    let held = ((all.len() as f64) * cfg.heldout_fraction).round() as usize;
    let pool = all.split_off(held);
    if let Some(&budget) = cfg.budgets.iter().find(|&&b| b > pool.len()) {
        return Err(Error::BudgetExceedsData { budget, available: pool.len() });
    }
    let held_samples = binary(&all);
    let frame_size = all.first().or(pool.first()).map(|(c, _)| c.dims()).unwrap_or((0, 0));
    let mut curve = LeakCurve { points: Vec::new(), heldout_pairs: all.len() };
    for &budget in &cfg.budgets {
        let leaked = binary(&pool[..budget]);
        let mut total = 0.0;
        for r in 0..cfg.restarts {
            let seed = derive_seed(cfg.seed, &format!("leak-{budget}-{r}"));
            let adversary = train_adversary(&leaked, frame_size, &AdversaryConfig { seed, ..cfg.adversary.clone() })?;
            total += adversary_accuracy(&adversary, &held_samples)?;
        }
        curve.points.push(LeakPoint { budget, accuracy: total / cfg.restarts as f64 });
    }
    Ok(curve)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RankedClip {
    pub clip_id: String,
    pub mean_apd: f64,
}

#[derive(Clone, Debug)]
pub struct GoodnessMatrix {
    pub cover_ids: Vec<String>,
    pub secret_ids: Vec<String>,
    /// Mean container APD of cover `i` hiding secret `j`.
    pub apd: Array2<f64>,
}

impl GoodnessMatrix {
    pub fn row_means(&self) -> Vec<f64> {
        self.apd.rows().into_iter().map(|r| r.mean().unwrap_or(0.0)).collect()
    }

    pub fn column_means(&self) -> Vec<f64> {
        self.apd.columns().into_iter().map(|c| c.mean().unwrap_or(0.0)).collect()
    }

    fn ranked(ids: &[String], means: Vec<f64>) -> Vec<RankedClip> {
        let mut v: Vec<RankedClip> =
            ids.iter().zip(means).map(|(id, m)| RankedClip { clip_id: id.clone(), mean_apd: m }).collect();
        v.sort_by(|a, b| a.mean_apd.total_cmp(&b.mean_apd));
        v
    }

    /// Covers from best (lowest mean APD) to worst.
    pub fn cover_ranking(&self) -> Vec<RankedClip> {
        Self::ranked(&self.cover_ids, self.row_means())
    }

    pub fn secret_ranking(&self) -> Vec<RankedClip> {
        Self::ranked(&self.secret_ids, self.column_means())
    }

    /// Writes `matrix.csv`, `covers.csv` and `secrets.csv` (rankings), and
    /// `extremes.csv` with the `top_k` best and worst of each.
    pub fn write(&self, dir: &Path, top_k: usize) -> Result<()> {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
        let path = dir.join("matrix.csv");
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["cover_id".to_string()];
        header.extend(self.secret_ids.iter().cloned());
        w.write_record(&header)?;
        for (id, row) in self.cover_ids.iter().zip(self.apd.rows()) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| format!("{v:.4}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(Error::io(&path))?;
        let covers = self.cover_ranking();
        let secrets = self.secret_ranking();
        write_csv(&covers, &dir.join("covers.csv"))?;
        write_csv(&secrets, &dir.join("secrets.csv"))?;
        #[derive(Serialize)]
        struct Extreme<'a> {
            role: &'static str,
            rank: &'static str,
            clip_id: &'a str,
            mean_apd: f64,
        }
        let mut rows = Vec::new();
        for (role, list) in [("cover", &covers), ("secret", &secrets)] {
            let k = top_k.min(list.len());
            for r in &list[..k] {
                rows.push(Extreme { role, rank: "best", clip_id: &r.clip_id, mean_apd: r.mean_apd });
            }
            for r in &list[list.len() - k..] {
                rows.push(Extreme { role, rank: "worst", clip_id: &r.clip_id, mean_apd: r.mean_apd });
            }
        }
        write_csv(rows, &dir.join("extremes.csv"))
    }
}

/// Container APD for every (cover, secret) combination through the video
/// pipeline; each cell is computed from its own pair alone.
pub fn run_goodness_matrix(
    bundle: &ModelBundle,
    covers: &[Arc<VideoClip>],
    secrets: &[Arc<VideoClip>],
    threshold: f64,
) -> Result<GoodnessMatrix> {
    if covers.is_empty() || secrets.is_empty() {
        return Err(Error::EmptyDataset("goodness matrix needs covers and secrets"));
    }
    let mut apd_m = Array2::zeros((covers.len(), secrets.len()));
    for (i, c) in covers.iter().enumerate() {
        for (j, s) in secrets.iter().enumerate() {
            let pair = ClipPair::new(Arc::clone(c), Arc::clone(s))?;
            let enc = encode_clip(bundle, &pair.cover, pair.secret, threshold)?;
            let total: f64 =
                enc.container.frames().iter().zip(c.frames()).map(|(k, f)| apd(k, f)).sum::<Result<f64>>()?;
            apd_m[[i, j]] = total / c.len() as f64;
        }
    }
    Ok(GoodnessMatrix {
        cover_ids: covers.iter().map(|c| c.id().to_string()).collect(),
        secret_ids: secrets.iter().map(|c| c.id().to_string()).collect(),
        apd: apd_m,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub reference_count: usize,
    pub residual_count: usize,
    /// Residuals per reference.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApdToFirst {
    pub clip_id: String,
    pub frame_idx: usize,
    pub apd: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ThresholdSweep {
    pub rows: Vec<SweepRow>,
    /// Segment-length histogram per threshold, in the order of `rows`.
    pub histograms: Vec<BTreeMap<usize, usize>>,
    pub apd_to_first: Vec<ApdToFirst>,
}

impl ThresholdSweep {
    /// Writes `counts.csv`, `segment_lengths.csv` and `apd_to_first.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_csv(&self.rows, &dir.join("counts.csv"))?;
        #[derive(Serialize)]
        struct HistRow {
            threshold: f64,
            length: usize,
            count: usize,
        }
        let hist = self
            .rows
            .iter()
            .zip(&self.histograms)
            .flat_map(|(r, h)| h.iter().map(|(&length, &count)| HistRow { threshold: r.threshold, length, count }));
        write_csv(hist, &dir.join("segment_lengths.csv"))?;
        write_csv(&self.apd_to_first, &dir.join("apd_to_first.csv"))
    }
}

pub fn run_threshold_sweep(clips: &[Arc<VideoClip>], thresholds: &[f64]) -> Result<ThresholdSweep> {
    let mut sweep = ThresholdSweep::default();
    for &t in thresholds {
        let labeled = clips.iter().map(|c| label_clip(Arc::clone(c), t)).collect::<Result<Vec<_>>>()?;
        let refs: usize = labeled.iter().map(|l| l.reference_count()).sum();
        let res: usize = labeled.iter().map(|l| l.residual_count()).sum();
        let segments: Vec<_> = labeled.iter().flat_map(segments_of).collect();
        sweep.rows.push(SweepRow {
            threshold: t,
            reference_count: refs,
            residual_count: res,
            ratio: if refs == 0 { 0.0 } else { res as f64 / refs as f64 },
        });
        sweep.histograms.push(segment_histogram(&segments));
    }
    for c in clips {
        let first = &c.frames()[0];
        for (i, f) in c.frames().iter().enumerate() {
            sweep.apd_to_first.push(ApdToFirst { clip_id: c.id().to_string(), frame_idx: i, apd: apd(f, first)? });
        }
    }
    Ok(sweep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::ArchConfig;

    fn textured(seed: u32) -> Frame {
        Frame::from_fn(128, 128, |c, y, x| ((x * 7 + y * 13 + c * 29 + seed as usize * 5) % 251) as f32 / 255.0)
            .unwrap()
    }

    #[test]
    fn corner_patches_fit_inside() {
        let spec = ProbeSpec::corners(128, 128);
        assert_eq!(spec.patches.len(), 4);
        assert_eq!(spec.patches[0].perturbation, Perturbation::SetWhite);
        assert_eq!((spec.patches[3].x, spec.patches[3].y), (104, 104));
        spec.apply(&textured(0)).unwrap();
    }

    #[test]
    fn out_of_bounds_patch_is_rejected() {
        let spec = ProbeSpec { patches: vec![Patch { x: 120, y: 0, size: 16, perturbation: Perturbation::ZeroR }] };
        assert!(matches!(spec.apply(&textured(0)), Err(Error::PatchOutOfBounds { .. })));
    }

    #[test]
    fn empty_spec_changes_nothing() {
        let arch = ArchConfig { hnet_base: 1, rnet_width: 1, ror_base: 1, adversary_base: 1, frame_size: (128, 128) };
        let b = ModelBundle::new(arch, 0);
        for dec in [ProbeDecoder::Lsb, ProbeDecoder::RNet(&b, FrameLabel::Reference)] {
            let r = run_probe(dec, &textured(1), &ProbeSpec::default()).unwrap();
            assert!(r.change_map.iter().all(|&v| v == 0.0));
            assert_eq!(r.changed_outside + r.changed_inside, 0);
        }
    }

    #[test]
    fn lsb_probe_is_local() {
        let cover = textured(2);
        let secret = textured(9);
        let container = lsb_encode_frames(&[cover], &[secret]).unwrap().remove(0);
        let r = run_probe(ProbeDecoder::Lsb, &container, &ProbeSpec::corners(128, 128)).unwrap();
        assert_eq!(r.changed_outside, 0);
        assert_eq!(r.max_change_outside, 0.0);
        assert!(r.changed_inside > 0);
    }

    #[test]
    fn leak_curve_rejects_unsorted_and_oversized_budgets() {
        let clip = |id: &str, s: u32| Arc::new(VideoClip::new(id, vec![textured(s), textured(s + 1)]).unwrap());
        let pairs = vec![ClipPair::new(clip("a", 0), clip("b", 5)).unwrap()];
        let cfg = LeakConfig { budgets: vec![2, 1], ..LeakConfig::default() };
        assert!(matches!(run_leak_curve(LeakCodec::Lsb, &pairs, &cfg), Err(Error::Config(_))));
        let cfg = LeakConfig { budgets: vec![0, 3], ..LeakConfig::default() };
        assert!(matches!(run_leak_curve(LeakCodec::Lsb, &pairs, &cfg), Err(Error::BudgetExceedsData { .. })));
    }

    #[test]
    fn curve_helpers() {
        let c = LeakCurve {
            points: vec![
                LeakPoint { budget: 0, accuracy: 0.5 },
                LeakPoint { budget: 10, accuracy: 0.85 },
                LeakPoint { budget: 20, accuracy: 0.82 },
            ],
            heldout_pairs: 4,
        };
        assert_eq!(c.budget_to_reach(0.8), Some(10));
        assert_eq!(c.budget_to_reach(0.9), None);
        assert!(c.is_non_decreasing(0.05));
        assert!(!c.is_non_decreasing(0.01));
    }

    #[test]
    fn unexceedable_threshold_gives_one_segment_per_clip() {
        let clips: Vec<_> = (0..3)
            .map(|i| Arc::new(VideoClip::new(format!("c{i}"), (0..5).map(|s| textured(s * 40 + i)).collect()).unwrap()))
            .collect();
        let sweep = run_threshold_sweep(&clips, &[1.0, 255.0]).unwrap();
        assert_eq!(sweep.rows[1].reference_count, 3);
        assert_eq!(sweep.histograms[1], BTreeMap::from([(5, 3)]));
        assert!(sweep.rows[0].reference_count >= sweep.rows[1].reference_count);
        assert_eq!(sweep.apd_to_first.len(), 15);
        assert_eq!(sweep.apd_to_first[0].apd, 0.0);
    }
}
