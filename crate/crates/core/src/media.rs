//! Frames, clips, dataset ingestion, cover/secret pairing and the APD metric.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::RgbImage;
use ndarray::{Array3, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One RGB frame with channel-planar values in `[0, 1]`, shape `(3, H, W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pixels: Array3<f32>,
}

impl Frame {
    pub fn new(pixels: Array3<f32>) -> Result<Self> {
        let (c, h, w) = pixels.dim();
        if c != 3 {
            return Err(Error::InvalidFrame(format!("expected 3 channels, got {c}")));
        }
        if h == 0 || w == 0 {
            return Err(Error::InvalidFrame("zero-sized frame".into()));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidFrame(format!("value {v} outside [0, 1]")));
        }
        Ok(Self { pixels })
    }

    /// Builds a frame, clamping every value into `[0, 1]`.
    pub fn from_clamped(mut pixels: Array3<f32>) -> Result<Self> {
        pixels.mapv_inplace(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
        Self::new(pixels)
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        assert!((0.0..=1.0).contains(&value));
        Self { pixels: Array3::from_elem((3, height, width), value) }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self> {
        Self::new(Array3::from_shape_fn((3, height, width), |(c, y, x)| f(c, y, x)))
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().2
    }

    /// `(height, width)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    pub fn pixels(&self) -> &Array3<f32> {
        &self.pixels
    }

    pub fn into_pixels(self) -> Array3<f32> {
        self.pixels
    }

    pub fn from_rgb8(img: &RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let pixels = Array3::from_shape_fn((3, h as usize, w as usize), |(c, y, x)| {
            img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
        });
        Self { pixels }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let (h, w) = self.dims();
        RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let px = |c: usize| (self.pixels[[c, y as usize, x as usize]] * 255.0).round().clamp(0.0, 255.0) as u8;
            image::Rgb([px(0), px(1), px(2)])
        })
    }

    /// Rounds every value to the nearest multiple of 1/255, as saving to an
    /// 8-bit file and loading it back would.
    pub fn quantized(&self) -> Self {
        Self { pixels: self.pixels.mapv(|v| (v * 255.0).round() / 255.0) }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_rgb8().save(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
    }
}

/// Averaged pixel-wise discrepancy on the 0–255 scale: the per-channel mean
/// absolute difference, averaged over R, G and B.
pub fn apd(a: &Frame, b: &Frame) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(a.dims(), b.dims()));
    }
    let (h, w) = a.dims();
    let n = (h * w) as f64;
    let mut total = 0.0;
    for c in 0..3 {
        let mut sum = 0.0f64;
        Zip::from(a.pixels.index_axis(ndarray::Axis(0), c))
            .and(b.pixels.index_axis(ndarray::Axis(0), c))
            .for_each(|&x, &y| sum += (255.0 * x as f64 - 255.0 * y as f64).abs());
        total += sum / n;
    }
    Ok(total / 3.0)
}

/// Mean of per-frame APD values over two equally long frame sequences.
pub fn apd_frames(a: &[Frame], b: &[Frame]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        sum += apd(x, y)?;
    }
    Ok(sum / a.len() as f64)
}

/// An ordered, non-empty sequence of equally sized frames.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoClip {
    id: String,
    frames: Vec<Frame>,
}

impl VideoClip {
    pub fn new(id: impl Into<String>, frames: Vec<Frame>) -> Result<Self> {
        let id = id.into();
        let Some(first) = frames.first() else {
            return Err(Error::EmptyClip(id));
        };
        let dims = first.dims();
        if let Some(f) = frames.iter().find(|f| f.dims() != dims) {
            return Err(Error::DimensionMismatch(dims, f.dims()));
        }
        Ok(Self { id, frames })
    }

    pub fn id(&self) -> &str {
        &self.id
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

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }
}

fn frame_index(path: &Path) -> Option<u64> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    if ext != "png" {
        return None;
    }
    path.file_stem()?.to_str()?.parse().ok()
}

/// Loads `<dir>/<index>.png` frames ordered by numeric index. The directory
/// name becomes the clip id.
pub fn load_clip(dir: &Path) -> Result<VideoClip> {
    let entries = fs::read_dir(dir).map_err(Error::io(dir))?;
    let mut indexed = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(Error::io(dir))?.path();
        if let Some(i) = frame_index(&path) {
            indexed.insert(i, path);
        }
    }
    if indexed.is_empty() {
        return Err(Error::NoFrames(dir.to_path_buf()));
    }
    let mut frames = Vec::with_capacity(indexed.len());
    let mut expected = None;
    for path in indexed.values() {
        let frame = Frame::load(path)?;
        match expected {
            None => expected = Some(frame.dims()),
            Some(dims) if dims != frame.dims() => {
                return Err(Error::InconsistentDimensions { path: path.clone(), expected: dims, found: frame.dims() })
            }
            Some(_) => {}
        }
        frames.push(frame);
    }
    let id = dir.file_name().and_then(|s| s.to_str()).unwrap_or("clip").to_string();
    VideoClip::new(id, frames)
}

pub fn frame_file_name(index: usize) -> String {
    format!("{:06}.png", index + 1)
}

/// Writes frames as `000001.png, 000002.png, ...` into `dir`.
pub fn save_frames(frames: &[Frame], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    for (i, f) in frames.iter().enumerate() {
        f.save(&dir.join(frame_file_name(i)))?;
    }
    Ok(())
}

pub fn save_clip(clip: &VideoClip, dir: &Path) -> Result<()> {
    save_frames(clip.frames(), dir)
}

/// Loads every clip directory under `root` (layout `<root>/<clip_id>/<index>.png`),
/// sorted by clip id.
pub fn load_dataset(root: &Path) -> Result<Vec<VideoClip>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(Error::io(root))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::EmptyDataset("no clip directories"));
    }
    dirs.iter().map(|d| load_clip(d)).collect()
}

/// A cover clip and the secret clip hidden inside it.
#[derive(Clone, Debug)]
pub struct ClipPair {
    pub cover: Arc<VideoClip>,
    pub secret: Arc<VideoClip>,
}

impl ClipPair {
    pub fn new(cover: Arc<VideoClip>, secret: Arc<VideoClip>) -> Result<Self> {
        if cover.len() != secret.len() {
            return Err(Error::LengthMismatch(cover.len(), secret.len()));
        }
        if cover.dims() != secret.dims() {
            return Err(Error::DimensionMismatch(cover.dims(), secret.dims()));
        }
        Ok(Self { cover, secret })
    }
}

fn check_uniform(clips: &[Arc<VideoClip>]) -> Result<()> {
    let first = &clips[0];
    for c in &clips[1..] {
        if c.dims() != first.dims() {
            return Err(Error::DimensionMismatch(first.dims(), c.dims()));
        }
        if c.len() != first.len() {
            return Err(Error::LengthMismatch(first.len(), c.len()));
        }
    }
    Ok(())
}

/// Random pairing: every clip is used once as a cover, paired with a random
/// different clip as its secret. Deterministic given `seed`.
pub fn make_pairs(clips: &[Arc<VideoClip>], seed: u64) -> Result<Vec<ClipPair>> {
    if clips.len() < 2 {
        return Err(Error::NotEnoughClips(clips.len()));
    }
    check_uniform(clips)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = clips.len();
    // Rejection-sample a derangement; expected ~e tries.
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(&mut rng);
        if perm.iter().enumerate().all(|(i, &j)| i != j) {
            break;
        }
    }
    perm.iter().enumerate().map(|(i, &j)| ClipPair::new(clips[i].clone(), clips[j].clone())).collect()
}

/// Every (cover, secret) combination whose clip ids differ.
pub fn make_exhaustive_pairs(covers: &[Arc<VideoClip>], secrets: &[Arc<VideoClip>]) -> Result<Vec<ClipPair>> {
    let mut out = Vec::with_capacity(covers.len() * secrets.len());
    for c in covers {
        for s in secrets {
            if c.id() != s.id() {
                out.push(ClipPair::new(c.clone(), s.clone())?);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Shuffles `ids` and cuts them into train/validation/test with sizes
/// `round(f * n)` for the first two and the remainder for test.
pub fn make_split(ids: &[String], fractions: [f64; 3], seed: u64) -> Result<DatasetSplit> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidFractions(fractions));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len();
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let test = shuffled.split_off(n_train + n_val);
    let validation = shuffled.split_off(n_train);
    Ok(DatasetSplit { train: shuffled, validation, test })
}

impl DatasetSplit {
    /// One section header per subset followed by one clip id per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, ids) in [("train", &self.train), ("validation", &self.validation), ("test", &self.test)] {
            s.push_str(&format!("[{name}]\n"));
            for id in ids {
                s.push_str(id);
                s.push('\n');
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut split = DatasetSplit::default();
        let mut section: Option<&mut Vec<String>> = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            match line {
                "[train]" => section = Some(&mut split.train),
                "[validation]" => section = Some(&mut split.validation),
                "[test]" => section = Some(&mut split.test),
                id => match section.as_deref_mut() {
                    Some(v) => v.push(id.to_string()),
                    None => return Err(Error::Config(format!("split file: id `{id}` before any section"))),
                },
            }
        }
        Ok(split)
    }
}

/// A split of a clip collection with cover/secret pairs formed inside each
/// subset.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub clips: Vec<Arc<VideoClip>>,
    pub split: DatasetSplit,
    pub train: Vec<ClipPair>,
    pub validation: Vec<ClipPair>,
    pub test: Vec<ClipPair>,
}

impl PreparedData {
    pub fn subset(&self, ids: &[String]) -> Vec<Arc<VideoClip>> {
        self.clips.iter().filter(|c| ids.iter().any(|i| i == c.id())).cloned().collect()
    }
}

/// Splits `clips` by `fractions` and pairs clips within each subset; a
/// subset with fewer than two clips gets no pairs.
pub fn prepare_pairs(clips: Vec<Arc<VideoClip>>, fractions: [f64; 3], seed: u64) -> Result<PreparedData> {
    let ids: Vec<String> = clips.iter().map(|c| c.id().to_string()).collect();
    let split = make_split(&ids, fractions, crate::seed::derive_seed(seed, "split"))?;
    let mut data = PreparedData { clips, split, train: vec![], validation: vec![], test: vec![] };
    let pair = |ids: &[String], tag: &str| {
        let sub = data.subset(ids);
        if sub.len() < 2 {
            Ok(vec![])
        } else {
            make_pairs(&sub, crate::seed::derive_seed(seed, tag))
        }
    };
    let (train, validation, test) = (
        pair(&data.split.train, "pairs-train")?,
        pair(&data.split.validation, "pairs-val")?,
        pair(&data.split.test, "pairs-test")?,
    );
    data.train = train;
    data.validation = validation;
    data.test = test;
    Ok(data)
}

/// Row of the per-frame APD table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApdRow {
    pub clip_id: String,
    pub frame_idx: usize,
    pub apd_container_cover: f64,
    pub apd_secret_decoded: f64,
}

pub fn write_apd_csv(rows: &[ApdRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(Error::io(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn noise_frame(h: usize, w: usize, seed: u64) -> Frame {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Frame::from_fn(h, w, |_, _, _| rng.random::<f32>()).unwrap()
    }

    #[test]
    fn apd_identity_and_constant_gap() {
        let a = Frame::filled(8, 8, 0.0);
        let b = Frame::filled(8, 8, 30.0 / 255.0);
        assert_eq!(apd(&a, &a).unwrap(), 0.0);
        assert!((apd(&a, &b).unwrap() - 30.0).abs() < 1e-4);
    }

    #[test]
    fn apd_rejects_mismatch() {
        let a = Frame::filled(8, 8, 0.0);
        let b = Frame::filled(8, 16, 0.0);
        assert!(matches!(apd(&a, &b), Err(Error::DimensionMismatch(..))));
    }

    #[test]
    fn apd_averages_channels() {
        // only the red channel differs, by 90 levels -> 30
        let a = Frame::filled(4, 4, 0.0);
        let b = Frame::from_fn(4, 4, |c, _, _| if c == 0 { 90.0 / 255.0 } else { 0.0 }).unwrap();
        assert!((apd(&a, &b).unwrap() - 30.0).abs() < 1e-4);
    }

    #[test]
    fn frame_rejects_out_of_range() {
        assert!(Frame::new(Array3::from_elem((3, 2, 2), 1.5)).is_err());
        assert!(Frame::new(Array3::from_elem((1, 2, 2), 0.5)).is_err());
        assert!(Frame::from_clamped(Array3::from_elem((3, 2, 2), 1.5)).is_ok());
    }

    proptest! {
        #[test]
        fn apd_is_symmetric(sa in 0u64..1000, sb in 0u64..1000) {
            let a = noise_frame(6, 5, sa);
            let b = noise_frame(6, 5, sb);
            prop_assert_eq!(apd(&a, &b).unwrap(), apd(&b, &a).unwrap());
            prop_assert_eq!(apd(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn split_is_disjoint_and_covering(n in 0usize..60, seed in 0u64..100, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (a, b) = (a.min(b), a.max(b));
            let ids: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
            let split = make_split(&ids, [a, b - a, 1.0 - b], seed).unwrap();
            let mut all: Vec<String> = split.train.iter().chain(&split.validation).chain(&split.test).cloned().collect();
            all.sort();
            let mut want = ids.clone();
            want.sort();
            prop_assert_eq!(all, want);
        }
    }

    #[test]
    fn split_paper_ratio() {
        let ids: Vec<String> = (0..12).map(|i| format!("v{i:02}")).collect();
        let s = make_split(&ids, [10.0 / 12.0, 1.0 / 12.0, 1.0 / 12.0], 7).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (10, 1, 1));
        assert_eq!(s, make_split(&ids, [10.0 / 12.0, 1.0 / 12.0, 1.0 / 12.0], 7).unwrap());
        let all_train = make_split(&ids, [1.0, 0.0, 0.0], 1).unwrap();
        assert_eq!(all_train.train.len(), 12);
        assert!(matches!(make_split(&ids, [0.5, 0.2, 0.2], 1), Err(Error::InvalidFractions(_))));
    }

    #[test]
    fn split_text_roundtrip() {
        let s = DatasetSplit { train: vec!["a".into(), "b".into()], validation: vec!["c".into()], test: vec![] };
        assert_eq!(DatasetSplit::from_text(&s.to_text()).unwrap(), s);
    }

    fn clip(id: &str, v: f32) -> Arc<VideoClip> {
        Arc::new(VideoClip::new(id, vec![Frame::filled(4, 4, v); 3]).unwrap())
    }

    #[test]
    fn pairs_two_clips() {
        let clips = vec![clip("A", 0.1), clip("B", 0.2)];
        let pairs = make_pairs(&clips, 3).unwrap();
        assert_eq!(pairs.len(), 2);
        for p in &pairs {
            assert_ne!(p.cover.id(), p.secret.id());
        }
        assert!(matches!(make_pairs(&clips[..1], 0), Err(Error::NotEnoughClips(1))));
    }

    #[test]
    fn pairs_are_deterministic_derangements() {
        let clips: Vec<_> = (0..9).map(|i| clip(&format!("c{i}"), i as f32 / 10.0)).collect();
        let ids = |ps: &[ClipPair]| {
            ps.iter().map(|p| (p.cover.id().to_string(), p.secret.id().to_string())).collect::<Vec<_>>()
        };
        let a = make_pairs(&clips, 11).unwrap();
        let b = make_pairs(&clips, 11).unwrap();
        assert_eq!(ids(&a), ids(&b));
        assert!(a.iter().all(|p| p.cover.id() != p.secret.id()));
    }

    #[test]
    fn exhaustive_pairs_count() {
        let covers: Vec<_> = (0..100).map(|i| clip(&format!("c{i}"), 0.5)).collect();
        let secrets: Vec<_> = (0..100).map(|i| clip(&format!("s{i}"), 0.5)).collect();
        assert_eq!(make_exhaustive_pairs(&covers, &secrets).unwrap().len(), 10_000);
    }

    #[test]
    fn loader_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let clip_dir = dir.path().join("clip0");
        let frames: Vec<Frame> = (0..24).map(|i| noise_frame(128, 128, i)).collect();
        save_frames(&frames, &clip_dir).unwrap();
        let loaded = load_clip(&clip_dir).unwrap();
        assert_eq!(loaded.len(), 24);
        assert_eq!(loaded.id(), "clip0");
        for (a, b) in frames.iter().zip(loaded.frames()) {
            let max = (a.pixels() - b.pixels()).iter().fold(0f32, |m, d| m.max(d.abs()));
            assert!(max <= 1.0 / 255.0);
        }

        let empty = dir.path().join("empty");
        fs::create_dir_all(&empty).unwrap();
        let err = load_clip(&empty).unwrap_err();
        assert!(err.to_string().contains("no frames found"), "{err}");

        let mixed = dir.path().join("mixed");
        save_frames(&[noise_frame(128, 128, 0)], &mixed).unwrap();
        noise_frame(256, 128, 1).save(&mixed.join("000002.png")).unwrap();
        let err = load_clip(&mixed).unwrap_err();
        assert!(err.to_string().contains("inconsistent dimensions"), "{err}");
        assert!(err.to_string().contains("000002.png"), "{err}");

        let err = load_clip(&dir.path().join("missing")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn loader_orders_numerically() {
        let dir = tempfile::tempdir().unwrap();
        Frame::filled(2, 2, 0.0).save(&dir.path().join("10.png")).unwrap();
        Frame::filled(2, 2, 1.0).save(&dir.path().join("9.png")).unwrap();
        fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let clip = load_clip(dir.path()).unwrap();
        assert_eq!(clip.len(), 2);
        assert_eq!(clip.frames()[0].pixels()[[0, 0, 0]], 1.0);
    }
}
