//! Labels the sample clips at several thresholds and prints how many frames
//! become references.
//!
//! cargo run --example threshold_sweep

use std::sync::Arc;

use vidsteg::experiments::run_threshold_sweep;
use vidsteg::labeling::{label_clip, FrameLabel, DEFAULT_THRESHOLD};
use vidsteg::media::load_dataset;

fn main() -> anyhow::Result<()> {
    let clips: Vec<_> = load_dataset("data/sample".as_ref())?.into_iter().map(Arc::new).collect();
    let first = label_clip(Arc::clone(&clips[0]), DEFAULT_THRESHOLD)?;
    let marks: String = first.labels.iter().map(|l| if *l == FrameLabel::Reference { 'R' } else { '.' }).collect();
    println!("{} at {DEFAULT_THRESHOLD}: {marks}", clips[0].id());

    let thresholds = [5.0, 10.0, 20.0, DEFAULT_THRESHOLD, 40.0, 60.0, 80.0];
    let sweep = run_threshold_sweep(&clips, &thresholds)?;
    println!("{:>9} {:>6} {:>6} {:>6}", "threshold", "refs", "res", "ratio");
    for r in &sweep.rows {
        println!("{:>9.2} {:>6} {:>6} {:>6.2}", r.threshold, r.reference_count, r.residual_count, r.ratio);
    }
    Ok(())
}
