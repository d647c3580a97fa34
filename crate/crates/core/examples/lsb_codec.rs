//! Hides one sample clip in another with 4-bit LSB substitution.
//!
//! cargo run --example lsb_codec -- [cover_dir] [secret_dir]

use vidsteg::lsb::{lsb_decode_frames, lsb_encode_frames};
use vidsteg::media::{apd_frames, load_clip};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let cover = load_clip(args.next().unwrap_or_else(|| "data/sample/nat00".into()).as_ref())?;
    let secret = load_clip(args.next().unwrap_or_else(|| "data/sample/nat03".into()).as_ref())?;
    let containers = lsb_encode_frames(cover.frames(), secret.frames())?;
    let decoded = lsb_decode_frames(&containers);
    println!("container vs cover APD  {:.3}", apd_frames(&containers, cover.frames())?);
    println!("decoded vs secret APD   {:.3}", apd_frames(&decoded, secret.frames())?);
    Ok(())
}
