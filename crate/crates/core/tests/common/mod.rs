#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use vidsteg::media::{load_dataset, VideoClip};

pub fn sample_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/sample")
}

pub fn stills_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/stills")
}

pub fn sample_clips() -> Vec<Arc<VideoClip>> {
    load_dataset(&sample_dir()).expect("bundled corpus").into_iter().map(Arc::new).collect()
}

/// Layer-by-layer count for the hiding network with first-stage width `b`:
/// conv weights + biases + two normalization parameters per channel, the
/// last deconv without normalization.
pub fn hnet_params_by_hand(b: usize) -> usize {
    let enc = [6, b, 2 * b, 4 * b, 8 * b, 8 * b, 8 * b, 8 * b];
    let dec_in = [8 * b, 16 * b, 16 * b, 16 * b, 8 * b, 4 * b, 2 * b];
    let dec_out = [8 * b, 8 * b, 8 * b, 4 * b, 2 * b, b, 3];
    let mut total = 0;
    for i in 0..7 {
        total += enc[i] * enc[i + 1] * 16 + enc[i + 1] + 2 * enc[i + 1];
    }
    for i in 0..7 {
        total += dec_in[i] * dec_out[i] * 16 + dec_out[i];
        if i < 6 {
            total += 2 * dec_out[i];
        }
    }
    total
}

pub fn rnet_params_by_hand(w: usize) -> usize {
    let mut total = 0;
    let mut c = 3;
    for _ in 0..5 {
        total += c * w * 9 + w + c * w * 25 + w + 2 * (2 * w);
        c = 2 * w;
    }
    total + c * 3 + 3
}
