//! 4-bit least-significant-bit embedding.

use ndarray::{Array3, Zip};

use crate::error::{Error, Result};
use crate::media::Frame;

/// 8-bit planar frame, shape `(3, H, W)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ByteFrame(pub Array3<u8>);

impl ByteFrame {
    pub fn dims(&self) -> (usize, usize) {
        let (_, h, w) = self.0.dim();
        (h, w)
    }

    pub fn from_frame(frame: &Frame) -> Self {
        Self(frame.pixels().mapv(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8))
    }

    pub fn to_frame(&self) -> Frame {
        Frame::new(self.0.mapv(|b| b as f32 / 255.0)).expect("bytes map into [0, 1]")
    }
}

pub fn encode_byte(cover: u8, secret: u8) -> u8 {
    (cover & 0xF0) | (secret >> 4)
}

pub fn decode_byte(container: u8) -> u8 {
    (container & 0x0F) << 4
}

pub fn lsb_encode(cover: &ByteFrame, secret: &ByteFrame) -> Result<ByteFrame> {
    if cover.dims() != secret.dims() {
        return Err(Error::DimensionMismatch(cover.dims(), secret.dims()));
    }
    Ok(ByteFrame(Zip::from(&cover.0).and(&secret.0).map_collect(|&c, &s| encode_byte(c, s))))
}

pub fn lsb_decode(container: &ByteFrame) -> ByteFrame {
    ByteFrame(container.0.mapv(decode_byte))
}

/// Frame-by-frame encoding of two equally long sequences.
pub fn lsb_encode_frames(covers: &[Frame], secrets: &[Frame]) -> Result<Vec<Frame>> {
    if covers.len() != secrets.len() {
        return Err(Error::LengthMismatch(covers.len(), secrets.len()));
    }
    covers
        .iter()
        .zip(secrets)
        .map(|(c, s)| Ok(lsb_encode(&ByteFrame::from_frame(c), &ByteFrame::from_frame(s))?.to_frame()))
        .collect()
}

pub fn lsb_decode_frames(containers: &[Frame]) -> Vec<Frame> {
    containers.iter().map(|c| lsb_decode(&ByteFrame::from_frame(c)).to_frame()).collect()
}

/// Counts of the 16 values of the low nibble of every byte.
pub fn low_nibble_histogram(frame: &ByteFrame) -> [u64; 16] {
    let mut h = [0; 16];
    frame.0.iter().for_each(|&b| h[(b & 0x0F) as usize] += 1);
    h
}

pub fn high_nibble_histogram(frame: &ByteFrame) -> [u64; 16] {
    let mut h = [0; 16];
    frame.0.iter().for_each(|&b| h[(b >> 4) as usize] += 1);
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bytes(seed: u64, h: usize, w: usize) -> ByteFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ByteFrame(Array3::from_shape_fn((3, h, w), |_| rng.random()))
    }

    #[test]
    fn byte_examples() {
        assert_eq!(encode_byte(0xAB, 0xCD), 0xAC);
        assert_eq!(encode_byte(171, 205), 172);
        assert_eq!(decode_byte(172), 192);
    }

    #[test]
    fn zero_secret_masks_cover() {
        let c = random_bytes(1, 8, 8);
        let s = ByteFrame(Array3::zeros((3, 8, 8)));
        assert_eq!(lsb_encode(&c, &s).unwrap(), ByteFrame(c.0.mapv(|b| b & 0xF0)));
    }

    #[test]
    fn rejects_mismatch() {
        assert!(lsb_encode(&random_bytes(0, 4, 4), &random_bytes(0, 4, 8)).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_exact(c in any::<u8>(), s in any::<u8>()) {
            prop_assert_eq!(decode_byte(encode_byte(c, s)), s & 0xF0);
        }

        #[test]
        fn frame_bytes_roundtrip(seed in any::<u64>()) {
            let b = random_bytes(seed, 3, 5);
            prop_assert_eq!(ByteFrame::from_frame(&b.to_frame()), b);
        }
    }

    #[test]
    fn locality_and_idempotence() {
        let c = random_bytes(2, 16, 16);
        let s = random_bytes(3, 16, 16);
        let a = lsb_encode(&c, &s).unwrap();
        assert_eq!(a, lsb_encode(&c, &s).unwrap());
        let mut c2 = c.clone();
        c2.0[[1, 5, 6]] ^= 0xFF;
        let b = lsb_encode(&c2, &s).unwrap();
        let diffs: Vec<_> = a.0.indexed_iter().filter(|(i, v)| b.0[*i] != **v).map(|(i, _)| i).collect();
        assert_eq!(diffs, vec![(1, 5, 6)]);
    }

    #[test]
    fn container_low_nibbles_mirror_secret_high_nibbles() {
        let c = random_bytes(4, 32, 32);
        let s = random_bytes(5, 32, 32);
        let container = lsb_encode(&c, &s).unwrap();
        assert_eq!(low_nibble_histogram(&container), high_nibble_histogram(&s));
    }
}
