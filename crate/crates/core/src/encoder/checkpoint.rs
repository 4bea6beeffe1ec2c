//! Parameter checkpoints: `LGXP`, a little-endian `u64` tensor count, then
//! each tensor in the `LGX1` matrix format. A JSON sidecar at `<path>.json`
//! records the structure needed to rebuild the stack.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EncoderError, EncoderKind, EncoderStack, GraphLayer, Linear};
use crate::numerics::io::{read_matrix, write_matrix};
use crate::numerics::DenseMatrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LGXP";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSidecar {
    pub kind: EncoderKind,
    pub adaptor: bool,
    pub input_dim: usize,
    pub layer_dims: Vec<usize>,
    pub tensors: Vec<TensorInfo>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> EncoderError + '_ {
    move |e| EncoderError::Checkpoint(format!("{}: {e}", path.display()))
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    stack: &EncoderStack,
    metadata: serde_json::Value,
) -> Result<(), EncoderError> {
    let path = path.as_ref();
    let params = stack.parameters();
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    w.write_all(CHECKPOINT_MAGIC).map_err(io_err(path))?;
    w.write_all(&(params.len() as u64).to_le_bytes())
        .map_err(io_err(path))?;
    for p in &params {
        write_matrix(&mut w, p).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))?;

    let sidecar = CheckpointSidecar {
        kind: stack.kind,
        adaptor: stack.adaptor.is_some(),
        input_dim: stack.input_dim(),
        layer_dims: stack.layers.iter().map(|l| l.weight.cols()).collect(),
        tensors: stack
            .parameter_names()
            .into_iter()
            .zip(&params)
            .map(|(name, p)| TensorInfo {
                name,
                rows: p.rows(),
                cols: p.cols(),
            })
            .collect(),
        metadata,
    };
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&side, json + "\n").map_err(io_err(&side))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<EncoderStack, EncoderError> {
    let path = path.as_ref();
    let side = sidecar_path(path);
    let sidecar: CheckpointSidecar = serde_json::from_slice(&fs::read(&side).map_err(io_err(&side))?)
        .map_err(|e| EncoderError::Checkpoint(format!("{}: {e}", side.display())))?;

    let mut r = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err(path))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(EncoderError::Checkpoint(format!("{}: bad magic", path.display())));
    }
    let mut count = [0u8; 8];
    r.read_exact(&mut count).map_err(io_err(path))?;
    let count = u64::from_le_bytes(count) as usize;
    if count != sidecar.tensors.len() {
        return Err(EncoderError::Checkpoint(format!(
            "{} tensors in file, {} in sidecar",
            count,
            sidecar.tensors.len()
        )));
    }
    let mut tensors: Vec<DenseMatrix> = Vec::with_capacity(count);
    for info in &sidecar.tensors {
        let m = read_matrix(&mut r).map_err(io_err(path))?;
        if m.shape() != (info.rows, info.cols) {
            return Err(EncoderError::Checkpoint(format!(
                "tensor {} has shape {:?}, sidecar says {:?}",
                info.name,
                m.shape(),
                (info.rows, info.cols)
            )));
        }
        tensors.push(m);
    }

    let mut it = tensors.into_iter();
    let mut next = || {
        it.next()
            .ok_or_else(|| EncoderError::Checkpoint("sidecar structure does not match tensors".into()))
    };
    let adaptor = if sidecar.adaptor {
        Some(Linear {
            weight: next()?,
            bias: next()?,
        })
    } else {
        None
    };
    let mut layers = Vec::with_capacity(sidecar.layer_dims.len());
    for _ in &sidecar.layer_dims {
        let weight = next()?;
        let neighbor_weight = match sidecar.kind {
            EncoderKind::Sage => Some(next()?),
            EncoderKind::Gcn => None,
        };
        layers.push(GraphLayer {
            weight,
            neighbor_weight,
            bias: next()?,
        });
    }
    Ok(EncoderStack {
        kind: sidecar.kind,
        adaptor,
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_params, AdaptorConfig, EncoderDims};
    use crate::numerics::Rng;

    #[test]
    fn round_trip_both_kinds() {
        let dir = tempfile::tempdir().unwrap();
        for kind in [EncoderKind::Gcn, EncoderKind::Sage] {
            let mut rng = Rng::seed_from(5);
            let s = init_params(
                &mut rng,
                7,
                &EncoderDims {
                    hidden: vec![5],
                    output: 3,
                },
                kind,
                &AdaptorConfig::with_out_dim(4),
            )
            .unwrap();
            let p = dir.path().join("ckpt.bin");
            save_checkpoint(&p, &s, serde_json::json!({"seed": 5})).unwrap();
            let bytes = fs::read(&p).unwrap();
            assert_eq!(&bytes[..4], b"LGXP");
            assert_eq!(&bytes[12..16], b"LGX1");
            assert_eq!(load_checkpoint(&p).unwrap(), s);
        }
    }
}
