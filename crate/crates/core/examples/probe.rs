//! Perturbs four corner patches of a container and maps which decoded pixels
//! change, for LSB and for a trained reveal network.
//!
//! cargo run --example probe -- toy.safetensors [out_dir]

use std::path::PathBuf;

use vidsteg::experiments::{run_probe, ProbeDecoder, ProbeSpec};
use vidsteg::labeling::FrameLabel;
use vidsteg::lsb::lsb_encode_frames;
use vidsteg::media::Frame;
use vidsteg::nets::load_bundle;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let (bundle, _) = load_bundle(args.next().unwrap_or_else(|| "toy.safetensors".into()).as_ref())?;
    let out = args.next().map_or_else(|| PathBuf::from("probe-out"), PathBuf::from);
    std::fs::create_dir_all(&out)?;
    let cover = Frame::load("data/sample/nat00/000001.png".as_ref())?;
    let secret = Frame::load("data/sample/nat02/000001.png".as_ref())?;
    let spec = ProbeSpec::corners(cover.height(), cover.width());

    let lsb_container = lsb_encode_frames(&[cover.clone()], &[secret.clone()])?.remove(0);
    let deep_container = bundle.hide(FrameLabel::Reference, &[&cover], &[&secret])?.remove(0);
    for (name, decoder, container) in [
        ("lsb", ProbeDecoder::Lsb, &lsb_container),
        ("model", ProbeDecoder::RNet(&bundle, FrameLabel::Reference), &deep_container),
    ] {
        let r = run_probe(decoder, container, &spec)?;
        r.heat_map()?.save(&out.join(format!("{name}_change.png")))?;
        println!(
            "{name:<6} changed inside {:>6}, outside {:>6} (max {:.3})",
            r.changed_inside, r.changed_outside, r.max_change_outside
        );
    }
    Ok(())
}
