//! Container APD for every cover/secret combination of a few sample clips,
//! with the best and worst covers.
//!
//! cargo run --example goodness -- toy.safetensors [clips]

use std::sync::Arc;

use vidsteg::experiments::run_goodness_matrix;
use vidsteg::labeling::DEFAULT_THRESHOLD;
use vidsteg::media::load_dataset;
use vidsteg::nets::load_bundle;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let (bundle, _) = load_bundle(args.next().unwrap_or_else(|| "toy.safetensors".into()).as_ref())?;
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(6);
    let clips: Vec<_> = load_dataset("data/sample".as_ref())?.into_iter().take(n).map(Arc::new).collect();
    let m = run_goodness_matrix(&bundle, &clips, &clips, DEFAULT_THRESHOLD)?;
    print!("{:>7}", "");
    for s in &m.secret_ids {
        print!("{s:>7}");
    }
    println!();
    for (i, c) in m.cover_ids.iter().enumerate() {
        print!("{c:>7}");
        for v in m.apd.row(i) {
            print!("{v:>7.2}");
        }
        println!();
    }
    for r in m.cover_ranking() {
        println!("cover {:<6} mean {:.3}", r.clip_id, r.mean_apd);
    }
    Ok(())
}
