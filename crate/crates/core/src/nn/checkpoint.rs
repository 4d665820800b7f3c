//! Self-describing checkpoint container.
//!
//! Layout: magic `RSLG`, version u32 LE, header length u64 LE, the model
//! spec as JSON, then every tensor as raw little-endian f64 in spec order
//! (per layer: parameters, then buffers). Round trips are bit-identical.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::model::Model;
use super::ModelSpec;

const MAGIC: &[u8; 4] = b"RSLG";
const VERSION: u32 = 1;

pub fn save_checkpoint<T: Real>(model: &Model<T>, path: &Path) -> Result<()> {
    let header = serde_json::to_vec(&model.spec).map_err(|e| Error::json("checkpoint header", e))?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut write = |bytes: &[u8]| -> Result<()> {
        file.write_all(bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    };
    write(MAGIC)?;
    write(&VERSION.to_le_bytes())?;
    write(&(header.len() as u64).to_le_bytes())?;
    write(&header)?;
    for layer in &model.layers {
        for tensor in layer.params.iter().chain(&layer.buffers) {
            for &v in &tensor.data {
                write(&v.as_f64().to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Model<T>> {
    let bad = |msg: &str| Error::BadCheckpoint { path: path.to_path_buf(), msg: msg.to_string() };
    let mut file = fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;

    if bytes.len() < 16 || &bytes[0..4] != MAGIC {
        return Err(bad("missing magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + header_len {
        return Err(bad("truncated header"));
    }
    let spec: ModelSpec = serde_json::from_slice(&bytes[16..16 + header_len])
        .map_err(|e| Error::json(format!("checkpoint header of {}", path.display()), e))?;

    // materialize shapes via the normal constructor, then overwrite values
    let mut model = Model::<T>::new(spec, 0)?;
    let mut off = 16 + header_len;
    for layer in &mut model.layers {
        for tensor in layer.params.iter_mut().chain(layer.buffers.iter_mut()) {
            for v in &mut tensor.data {
                if off + 8 > bytes.len() {
                    return Err(bad("truncated tensor data"));
                }
                *v = T::of(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
                off += 8;
            }
        }
    }
    if off != bytes.len() {
        return Err(bad(&format!("{} trailing bytes", bytes.len() - off)));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::Mode;
    use crate::nn::{LayerSpec, ModelSpec, Padding};

    fn spec() -> ModelSpec {
        ModelSpec {
            layers: vec![
                LayerSpec::Conv2D { kernel: (3, 3), out_channels: 2, padding: Padding::Same },
                LayerSpec::BatchNorm2D { eps: 1e-5, momentum: 0.9 },
                LayerSpec::Relu,
                LayerSpec::MaxPool2,
                LayerSpec::Flatten,
                LayerSpec::Dense { out: 3 },
                LayerSpec::Softmax,
            ],
            input: (4, 4, 1),
            classes: 3,
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut model: Model<f64> = Model::new(spec(), 11).unwrap();
        // perturb running stats so buffers carry non-init values
        let input: Vec<f64> = (0..16).map(|i| (i as f64 * 0.31).sin()).collect();
        let _ = model.forward(&input, 1, Mode::Train { seed: 0 }).unwrap();

        save_checkpoint(&model, &path).unwrap();
        let mut loaded: Model<f64> = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.spec, model.spec);
        for (a, b) in model.layers.iter().zip(&loaded.layers) {
            for (ta, tb) in a.params.iter().zip(&b.params) {
                assert_eq!(ta.shape, tb.shape);
                for (x, y) in ta.data.iter().zip(&tb.data) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
            for (ta, tb) in a.buffers.iter().zip(&b.buffers) {
                for (x, y) in ta.data.iter().zip(&tb.data) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }

        // forward after reload is bit-identical
        let (out_a, _) = model.forward(&input, 1, Mode::Infer).unwrap();
        let (out_b, _) = loaded.forward(&input, 1, Mode::Infer).unwrap();
        for (x, y) in out_a.iter().zip(&out_b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(matches!(load_checkpoint::<f64>(&path), Err(Error::BadCheckpoint { .. })));

        let model: Model<f64> = Model::new(spec(), 11).unwrap();
        save_checkpoint(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint::<f64>(&path), Err(Error::BadCheckpoint { .. })));
    }
}
