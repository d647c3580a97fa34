//! Regenerates the bundled sample corpus and prints its labeling statistics.
//!
//! cargo run --example sample_corpus -- [stills_dir] [out_dir]

use std::path::PathBuf;
use std::sync::Arc;

use vidsteg::labeling::{label_clip, DEFAULT_THRESHOLD};
use vidsteg::synth::{load_stills, sample_corpus, write_corpus, SynthConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let stills = args.next().map(PathBuf::from).unwrap_or_else(|| "data/stills".into());
    let out = args.next().map(PathBuf::from);
    let clips = sample_corpus(&load_stills(&stills)?, &SynthConfig::default())?;
    let (mut refs, mut res) = (0, 0);
    for clip in &clips {
        let l = label_clip(Arc::new(clip.clone()), DEFAULT_THRESHOLD)?;
        println!("{:6} refs {:2} residuals {:2}", clip.id(), l.reference_count(), l.residual_count());
        refs += l.reference_count();
        res += l.residual_count();
    }
    println!("total refs {refs} residuals {res} ratio {:.2}", res as f64 / refs as f64);
    if let Some(out) = out {
        write_corpus(&clips, &out)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}
