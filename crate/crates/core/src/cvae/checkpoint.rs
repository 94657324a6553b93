//! Versioned JSON checkpoints: layer names, shapes, row-major values,
//! optimizer state and normalization statistics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CvaeError, CvaeModel};
use crate::nncore::AdamState;
use crate::trajdata::NormStats;

pub const CHECKPOINT_FORMAT: &str = "latloop.ckpt.v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub model: CvaeModel,
    pub norm: Option<NormStats>,
    pub harbour: [f64; 2],
    pub adam: Option<AdamState>,
}

impl Checkpoint {
    pub fn new(model: CvaeModel, norm: Option<NormStats>, harbour: [f64; 2], adam: Option<AdamState>) -> Self {
        Self { format: CHECKPOINT_FORMAT.into(), model, norm, harbour, adam }
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), CvaeError> {
    let json = serde_json::to_string_pretty(ckpt).map_err(|e| CvaeError::Checkpoint {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    std::fs::write(path, json).map_err(|e| CvaeError::Checkpoint {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CvaeError> {
    let text = std::fs::read_to_string(path).map_err(|e| CvaeError::Checkpoint {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let mut ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| CvaeError::Checkpoint {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(CvaeError::Checkpoint {
            path: path.display().to_string(),
            detail: format!("unsupported format tag `{}` (expected `{CHECKPOINT_FORMAT}`)", ckpt.format),
        });
    }
    // gradient buffers are not serialized
    ckpt.model.encoder.reset_grads();
    ckpt.model.decoder.reset_grads();
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvae::tests::small_dataset;
    use crate::cvae::{train, ModelConfig};

    #[test]
    fn checkpoint_roundtrip_preserves_model_exactly() {
        let data = small_dataset(31);
        let cfg = ModelConfig { d_z: 2, epochs: 3, batch_size: 16, seed: 31, ..Default::default() };
        let out = train(&data, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let ckpt = Checkpoint::new(out.model.clone(), data.norm.clone(), data.harbour, Some(out.adam));
        save_checkpoint(&ckpt, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.model.params(), out.model.params());
        assert_eq!(back.norm, data.norm);
        // running statistics survive too
        let q1 = out.model.encode(&data.trajectories[0], data.covariates[0]).unwrap();
        let q2 = back.model.encode(&data.trajectories[0], data.covariates[0]).unwrap();
        assert_eq!(q1, q2);
    }

    #[test]
    fn wrong_format_tag_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, r#"{"format":"other.v9"}"#).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(CvaeError::Checkpoint { .. })));
    }
}
