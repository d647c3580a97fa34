//! Generator for the bundled sample corpus: camera moves and cuts over still
//! photographs plus procedurally drawn scenes.

use std::f32::consts::PI;
use std::path::Path;

use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::media::{save_clip, Frame, VideoClip};

pub const STILL_NAMES: [&str; 5] = ["astronaut", "chelsea", "coffee", "rocket", "hubble_deep_field"];

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub size: usize,
    pub frames: usize,
    pub seed: u64,
    /// Standard deviation of additive sensor noise, in 0–255 units.
    pub noise: f32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { size: 128, frames: 24, seed: 2024, noise: 1.0 }
    }
}

/// A still image stored channel-planar in `[0, 1]`.
pub struct Still {
    pub name: String,
    pixels: Array3<f32>,
}

impl Still {
    pub fn load(path: &Path) -> Result<Self> {
        let frame = Frame::load(path)?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("still").to_string();
        Ok(Self { name, pixels: frame.into_pixels() })
    }

    fn dims(&self) -> (f32, f32) {
        let (_, h, w) = self.pixels.dim();
        (h as f32, w as f32)
    }

    /// Bilinear lookup with edge clamping, coordinates in pixels.
    fn sample(&self, c: usize, y: f32, x: f32) -> f32 {
        let (_, h, w) = self.pixels.dim();
        let y = y.clamp(0.0, (h - 1) as f32);
        let x = x.clamp(0.0, (w - 1) as f32);
        let (y0, x0) = (y.floor() as usize, x.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        let (fy, fx) = (y - y0 as f32, x - x0 as f32);
        let p = &self.pixels;
        let top = p[[c, y0, x0]] * (1.0 - fx) + p[[c, y0, x1]] * fx;
        let bot = p[[c, y1, x0]] * (1.0 - fx) + p[[c, y1, x1]] * fx;
        top * (1.0 - fy) + bot * fy
    }
}

pub fn load_stills(dir: &Path) -> Result<Vec<Still>> {
    STILL_NAMES.iter().map(|n| Still::load(&dir.join(format!("{n}.png")))).collect()
}

/// A camera move over one still: the crop centre travels between two points
/// given as fractions of the still size, and the crop spans `zoom * size`
/// still pixels.
#[derive(Clone, Copy, Debug)]
struct Shot {
    still: usize,
    from: (f32, f32),
    to: (f32, f32),
    zoom: (f32, f32),
}

fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + (b - a) * t
}

fn render_shot(still: &Still, shot: &Shot, t: f32, size: usize) -> Array3<f32> {
    let (h, w) = still.dims();
    let cy = lerp(shot.from.0, shot.to.0, t) * h;
    let cx = lerp(shot.from.1, shot.to.1, t) * w;
    let zoom = lerp(shot.zoom.0, shot.zoom.1, t);
    let half = size as f32 / 2.0;
    Array3::from_shape_fn((3, size, size), |(c, y, x)| {
        still.sample(c, cy + (y as f32 + 0.5 - half) * zoom, cx + (x as f32 + 0.5 - half) * zoom)
    })
}

/// Shots with the frame index where each one starts.
fn natural_scripts() -> Vec<Vec<(usize, Shot)>> {
    let s = |still, from, to, zoom| Shot { still, from, to, zoom };
    vec![
        vec![(0, s(0, (0.45, 0.35), (0.45, 0.60), (1.4, 1.4)))],
        vec![(0, s(1, (0.50, 0.62), (0.50, 0.40), (1.5, 1.5)))],
        vec![(0, s(2, (0.50, 0.50), (0.50, 0.50), (2.0, 1.1)))],
        vec![(0, s(3, (0.70, 0.50), (0.30, 0.50), (1.3, 1.3)))],
        vec![(0, s(4, (0.25, 0.25), (0.70, 0.75), (1.0, 1.0)))],
        vec![(0, s(0, (0.40, 0.50), (0.40, 0.50), (1.0, 1.8))), (12, s(2, (0.45, 0.35), (0.45, 0.45), (1.6, 1.6)))],
        vec![
            (0, s(1, (0.50, 0.45), (0.50, 0.50), (1.8, 1.8))),
            (8, s(3, (0.55, 0.40), (0.50, 0.45), (1.4, 1.4))),
            (16, s(4, (0.50, 0.50), (0.50, 0.50), (1.0, 1.3))),
        ],
        vec![(0, s(2, (0.40, 0.45), (0.50, 0.55), (1.2, 1.2)))],
    ]
}

fn natural_clip(stills: &[Still], script: &[(usize, Shot)], cfg: &SynthConfig) -> Vec<Array3<f32>> {
    (0..cfg.frames)
        .map(|i| {
            let k = script.iter().rposition(|(start, _)| *start <= i).unwrap_or(0);
            let (start, shot) = script[k];
            let end = script.get(k + 1).map_or(cfg.frames, |(s, _)| *s);
            let span = (end - start).saturating_sub(1).max(1) as f32;
            render_shot(&stills[shot.still], &shot, (i - start) as f32 / span, cfg.size)
        })
        .collect()
}

type Scene = Box<dyn Fn(f32, f32, f32) -> [f32; 3]>;

fn disc(x: f32, y: f32, cx: f32, cy: f32, r: f32) -> bool {
    (x - cx).powi(2) + (y - cy).powi(2) <= r * r
}

/// Procedural scenes over normalized coordinates `(t, x, y)` in `[0, 1]`.
fn synthetic_scenes() -> Vec<Scene> {
    vec![
        // two discs crossing a horizontal gradient
        Box::new(|t, x, y| {
            let mut p = [0.2 + 0.6 * x, 0.3, 0.8 - 0.5 * x];
            if disc(x, y, 0.15 + 0.7 * t, 0.35, 0.12) {
                p = [0.95, 0.85, 0.1];
            }
            if disc(x, y, 0.85 - 0.7 * t, 0.7, 0.1) {
                p = [0.1, 0.6, 0.9];
            }
            p
        }),
        // rectangle sliding down a vertical gradient
        Box::new(|t, x, y| {
            let top = 0.05 + 0.55 * t;
            if (0.3..0.7).contains(&x) && (top..top + 0.3).contains(&y) {
                [0.9, 0.2, 0.2]
            } else {
                [0.1 + 0.3 * y, 0.4 + 0.4 * y, 0.6]
            }
        }),
        // cross-fade between two gradients
        Box::new(|t, x, y| {
            let a = [0.9 * x, 0.5, 0.9 * y];
            let b = [0.2, 0.9 * (1.0 - y), 0.8 * (1.0 - x)];
            [lerp(a[0], b[0], t), lerp(a[1], b[1], t), lerp(a[2], b[2], t)]
        }),
        // drifting diagonal stripes
        Box::new(|t, x, y| {
            let v = 0.5 + 0.35 * ((x + y) * 6.0 * PI - t * 2.0 * PI).sin();
            [v, 0.5 * v + 0.2, 0.8 - 0.5 * v]
        }),
        // orbiting disc with a hard cut to a new palette at mid-clip
        Box::new(|t, x, y| {
            let (cx, cy) = (0.5 + 0.3 * (t * 2.0 * PI).cos(), 0.5 + 0.3 * (t * 2.0 * PI).sin());
            let inside = disc(x, y, cx, cy, 0.15);
            match (t < 0.5, inside) {
                (true, true) => [1.0, 1.0, 1.0],
                (true, false) => [0.15, 0.2 + 0.3 * x, 0.35],
                (false, true) => [0.05, 0.05, 0.05],
                (false, false) => [0.85, 0.75 - 0.3 * y, 0.4],
            }
        }),
        // small ball drifting over a static scene
        Box::new(|t, x, y| {
            if disc(x, y, 0.2 + 0.6 * t, 0.5 + 0.1 * (t * 4.0 * PI).sin(), 0.06) {
                [0.95, 0.95, 0.2]
            } else {
                [0.3 + 0.2 * (x * 5.0).sin().abs(), 0.45, 0.3 + 0.3 * y]
            }
        }),
        // brightness ramp over a radial pattern
        Box::new(|t, x, y| {
            let r = ((x - 0.5).powi(2) + (y - 0.5).powi(2)).sqrt();
            let v = (0.5 + 0.5 * (r * 20.0).cos()) * (0.25 + 0.6 * t);
            [v, v * 0.8, 0.3 * v + 0.1]
        }),
        // scrolling checkerboard
        Box::new(|t, x, y| {
            let on = ((((x + 0.5 * t) * 6.0).floor() as i32 + (y * 6.0).floor() as i32) & 1) == 0;
            if on {
                [0.8, 0.7, 0.5]
            } else {
                [0.25, 0.3, 0.45]
            }
        }),
    ]
}

fn synthetic_clip(scene: &Scene, cfg: &SynthConfig) -> Vec<Array3<f32>> {
    let n = cfg.size as f32;
    let span = cfg.frames.saturating_sub(1).max(1) as f32;
    (0..cfg.frames)
        .map(|i| {
            let t = i as f32 / span;
            let mut a = Array3::zeros((3, cfg.size, cfg.size));
            for y in 0..cfg.size {
                for x in 0..cfg.size {
                    let p = scene(t, (x as f32 + 0.5) / n, (y as f32 + 0.5) / n);
                    for c in 0..3 {
                        a[[c, y, x]] = p[c];
                    }
                }
            }
            a
        })
        .collect()
}

fn finish(raw: Vec<Array3<f32>>, rng: &mut ChaCha8Rng, noise: f32) -> Result<Vec<Frame>> {
    let dist = Normal::new(0.0, noise / 255.0).map_err(|e| Error::Config(e.to_string()))?;
    raw.into_iter()
        .map(|mut a| {
            if noise > 0.0 {
                a.mapv_inplace(|v| v + dist.sample(rng));
            }
            Ok(Frame::from_clamped(a)?.quantized())
        })
        .collect()
}

/// Eight natural clips (`nat00`..`nat07`) and eight procedural ones
/// (`syn00`..`syn07`).
pub fn sample_corpus(stills: &[Still], cfg: &SynthConfig) -> Result<Vec<VideoClip>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut clips = Vec::new();
    for (i, script) in natural_scripts().iter().enumerate() {
        let frames = finish(natural_clip(stills, script, cfg), &mut rng, cfg.noise)?;
        clips.push(VideoClip::new(format!("nat{i:02}"), frames)?);
    }
    for (i, scene) in synthetic_scenes().iter().enumerate() {
        let frames = finish(synthetic_clip(scene, cfg), &mut rng, cfg.noise)?;
        clips.push(VideoClip::new(format!("syn{i:02}"), frames)?);
    }
    Ok(clips)
}

/// Writes every clip to `<root>/<clip_id>/`.
pub fn write_corpus(clips: &[VideoClip], root: &Path) -> Result<()> {
    for c in clips {
        save_clip(c, &root.join(c.id()))?;
    }
    Ok(())
}
