//! Hides one sample clip in another with a trained bundle, then decodes the
//! container without any side information.
//!
//! cargo run --example hide_reveal -- toy.safetensors [cover_dir] [secret_dir]

use std::sync::Arc;

use vidsteg::labeling::DEFAULT_THRESHOLD;
use vidsteg::media::{apd, load_clip};
use vidsteg::nets::load_bundle;
use vidsteg::pipeline::{decode_clip, encode_clip};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let model = args.next().unwrap_or_else(|| "toy.safetensors".into());
    let cover = load_clip(args.next().unwrap_or_else(|| "data/sample/nat00".into()).as_ref())?;
    let secret = Arc::new(load_clip(args.next().unwrap_or_else(|| "data/sample/nat05".into()).as_ref())?);
    let (bundle, _) = load_bundle(model.as_ref())?;

    let enc = encode_clip(&bundle, &cover, Arc::clone(&secret), DEFAULT_THRESHOLD)?;
    let dec = decode_clip(&bundle, &enc.container)?;
    println!("{:>3} {:>9} {:>9} {:>9} {:>9}", "t", "label", "verdict", "cont-apd", "sec-apd");
    for t in 0..cover.len() {
        println!(
            "{t:>3} {:>9} {:>9} {:>9.2} {:>9.2}",
            enc.labeled.labels[t],
            dec.decisions[t].verdict,
            apd(&enc.container.frames()[t], &cover.frames()[t])?,
            apd(&dec.frames[t], &secret.frames()[t])?
        );
    }
    Ok(())
}
