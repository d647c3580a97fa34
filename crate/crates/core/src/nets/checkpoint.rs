use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use safetensors::tensor::TensorView;
use safetensors::{Dtype, SafeTensors};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vidsteg_nn::StateDict;

use super::{ArchConfig, BundleState, ModelBundle};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "vidsteg-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub version: u32,
    pub architecture_hash: String,
    pub arch: ArchConfig,
    pub state: BundleState,
    pub has_discriminator: bool,
    pub config_digest: String,
}

/// Digest of the architecture config together with every tensor name and
/// shape the bundle holds.
pub fn architecture_hash(bundle: &ModelBundle) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&bundle.arch).expect("arch serializes"));
    for (net, layer) in bundle.networks() {
        layer.visit(&mut |name, p| {
            h.update(format!("{net}.{name}:{:?};", p.shape).as_bytes());
        });
    }
    hex::encode(h.finalize())
}

fn ckpt_err(e: impl std::fmt::Display) -> Error {
    Error::Checkpoint(e.to_string())
}

pub fn save_bundle(bundle: &ModelBundle, config_digest: &str, path: &Path) -> Result<()> {
    let mut bytes: BTreeMap<String, (Vec<usize>, Vec<u8>)> = BTreeMap::new();
    for (net, layer) in bundle.networks() {
        layer.visit(&mut |name, p| {
            let data = p.value.iter().flat_map(|v| v.to_le_bytes()).collect();
            bytes.insert(format!("{net}.{name}"), (p.shape.clone(), data));
        });
    }
    let views = bytes
        .iter()
        .map(|(k, (shape, data))| Ok((k.clone(), TensorView::new(Dtype::F32, shape.clone(), data).map_err(ckpt_err)?)))
        .collect::<Result<Vec<_>>>()?;
    let meta = CheckpointMeta {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        architecture_hash: architecture_hash(bundle),
        arch: bundle.arch.clone(),
        state: bundle.state.clone(),
        has_discriminator: bundle.discriminator.is_some(),
        config_digest: config_digest.into(),
    };
    let info = HashMap::from([("manifest".to_string(), serde_json::to_string(&meta).map_err(ckpt_err)?)]);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(Error::io(parent))?;
    }
    safetensors::serialize_to_file(views, Some(info), path).map_err(ckpt_err)
}

pub fn read_meta(bytes: &[u8]) -> Result<CheckpointMeta> {
    let (_, md) = SafeTensors::read_metadata(bytes).map_err(ckpt_err)?;
    let manifest = md
        .metadata()
        .as_ref()
        .and_then(|m| m.get("manifest"))
        .ok_or_else(|| Error::Checkpoint("missing manifest".into()))?;
    let meta: CheckpointMeta = serde_json::from_str(manifest).map_err(ckpt_err)?;
    if meta.format != CHECKPOINT_FORMAT || meta.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format {} v{}", meta.format, meta.version)));
    }
    Ok(meta)
}

pub fn load_bundle(path: &Path) -> Result<(ModelBundle, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    let meta = read_meta(&bytes)?;
    let mut bundle = ModelBundle::new(meta.arch.clone(), 0);
    if meta.has_discriminator {
        bundle = bundle.with_discriminator(0);
    }
    let expected = architecture_hash(&bundle);
    if expected != meta.architecture_hash {
        return Err(Error::ArchitectureMismatch { expected, found: meta.architecture_hash });
    }
    let st = SafeTensors::deserialize(&bytes).map_err(ckpt_err)?;
    let mut per_net: BTreeMap<String, StateDict> = BTreeMap::new();
    for (name, view) in st.tensors() {
        if view.dtype() != Dtype::F32 {
            return Err(Error::Checkpoint(format!("tensor {name} is {:?}, expected F32", view.dtype())));
        }
        let (net, param) = name.split_once('.').ok_or_else(|| Error::Checkpoint(format!("bad tensor name {name}")))?;
        let values = view.data().chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        per_net.entry(net.to_string()).or_default().tensors.insert(param.to_string(), (view.shape().to_vec(), values));
    }
    for (net, layer) in bundle.networks_mut() {
        let sd = per_net.remove(net).ok_or_else(|| Error::Checkpoint(format!("missing network {net}")))?;
        layer.load_state_dict(&sd).map_err(|e| Error::Checkpoint(format!("{net}: {e}")))?;
    }
    if let Some(extra) = per_net.keys().next() {
        return Err(Error::Checkpoint(format!("unexpected network {extra}")));
    }
    bundle.state = meta.state.clone();
    Ok((bundle, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::FrameLabel;
    use crate::media::Frame;

    fn tiny() -> ArchConfig {
        ArchConfig { hnet_base: 1, rnet_width: 2, ror_base: 1, adversary_base: 1, frame_size: (128, 128) }
    }

    #[test]
    fn roundtrip_preserves_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.safetensors");
        let mut b = ModelBundle::new(tiny(), 9).with_discriminator(9);
        b.state.hr_steps = 12;
        save_bundle(&b, "abc", &path).unwrap();
        let (l, meta) = load_bundle(&path).unwrap();
        assert_eq!(meta.state.hr_steps, 12);
        assert_eq!(meta.config_digest, "abc");
        for ((n1, a), (n2, c)) in b.networks().iter().zip(l.networks().iter()) {
            assert_eq!(n1, n2);
            assert_eq!(a.state_dict(), c.state_dict());
        }
        let f = Frame::filled(128, 128, 0.25);
        assert_eq!(
            b.hide(FrameLabel::Residual, &[&f], &[&f]).unwrap(),
            l.hide(FrameLabel::Residual, &[&f], &[&f]).unwrap()
        );
    }

    #[test]
    fn mismatched_hash_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.safetensors");
        let b = ModelBundle::new(tiny(), 1);
        save_bundle(&b, "", &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let meta = read_meta(&bytes).unwrap();
        let text = String::from_utf8_lossy(&bytes).to_string();
        let pos = text.find(&meta.architecture_hash).unwrap();
        bytes[pos] = if bytes[pos] == b'0' { b'1' } else { b'0' };
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_bundle(&path), Err(Error::ArchitectureMismatch { .. })));
    }
}
