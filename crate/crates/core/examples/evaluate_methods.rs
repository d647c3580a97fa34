//! Scores LSB, the image model and the video model on the test pairs.
//!
//! cargo run --example evaluate_methods -- toy.safetensors

use std::sync::Arc;

use vidsteg::labeling::DEFAULT_THRESHOLD;
use vidsteg::media::{load_dataset, prepare_pairs};
use vidsteg::nets::load_bundle;
use vidsteg::pipeline::{evaluate, Method};

fn main() -> anyhow::Result<()> {
    let model = std::env::args().nth(1).unwrap_or_else(|| "toy.safetensors".into());
    let (bundle, _) = load_bundle(model.as_ref())?;
    let clips = load_dataset("data/sample".as_ref())?.into_iter().map(Arc::new).collect();
    let data = prepare_pairs(clips, [0.5, 0.25, 0.25], 7)?;
    println!("{:<6} {:>14} {:>14}", "method", "container-cover", "secret-decoded");
    for method in [Method::Lsb, Method::Image, Method::Video] {
        let ev = evaluate(Some(&bundle), &data.test, DEFAULT_THRESHOLD, method)?;
        println!("{method:<6?} {:>14.3} {:>14.3}", ev.summary.apd_container_cover, ev.summary.apd_secret_decoded);
    }
    Ok(())
}
