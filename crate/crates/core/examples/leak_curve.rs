//! Trains a fresh cover/container adversary per leak budget, for LSB and for
//! a trained bundle.
//!
//! cargo run --example leak_curve -- toy.safetensors

use std::sync::Arc;

use vidsteg::experiments::{run_leak_curve, LeakCodec, LeakConfig};
use vidsteg::media::{load_dataset, make_exhaustive_pairs};
use vidsteg::nets::load_bundle;

fn main() -> anyhow::Result<()> {
    let (bundle, _) = load_bundle(std::env::args().nth(1).unwrap_or_else(|| "toy.safetensors".into()).as_ref())?;
    let clips: Vec<_> = load_dataset("data/sample".as_ref())?.into_iter().take(6).map(Arc::new).collect();
    let pairs = make_exhaustive_pairs(&clips, &clips)?;
    let cfg = LeakConfig { budgets: vec![0, 25, 50, 100, 200, 400], ..LeakConfig::default() };
    for (name, codec) in [("lsb", LeakCodec::Lsb), ("model", LeakCodec::Model(&bundle))] {
        let curve = run_leak_curve(codec, &pairs, &cfg)?;
        let pts: Vec<String> = curve.points.iter().map(|p| format!("{}:{:.2}", p.budget, p.accuracy)).collect();
        println!("{name:<6} {}", pts.join("  "));
    }
    Ok(())
}
