//! Versioned binary model files.
//!
//! Layout: the magic bytes `FERM`, a little-endian `u32` format version, a
//! little-endian `u32` header length, the UTF-8 JSON header, then the body:
//! every weight blob as little-endian `f32`, in manifest order. The header
//! lists the layer stack and a manifest whose byte ranges tile the body.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nn::{BatchNorm, Conv2d, Dense, Dropout, Layer, MaxPool, Model, NnError, Padding};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"FERM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected \"FERM\", found {0:?}")]
    BadMagic(Vec<u8>),
    #[error("unsupported format version {0} (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("truncated header: declared {declared} bytes, {available} available")]
    TruncatedHeader { declared: usize, available: usize },
    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("manifest mismatch: {0}")]
    Manifest(String),
    #[error("truncated body: manifest needs {expected} bytes, file has {actual}")]
    TruncatedBody { expected: usize, actual: usize },
    #[error("invalid model: {0}")]
    Model(#[from] NnError),
}

pub type Result<T> = std::result::Result<T, StoreError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: usize,
        padding: Padding,
    },
    BatchNorm {
        channels: usize,
        epsilon: f64,
        momentum: f64,
    },
    Relu,
    MaxPool {
        window: usize,
        stride: usize,
    },
    Dropout {
        rate: f64,
    },
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the body.
    pub offset: usize,
    /// Byte length.
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub manifest: Vec<BlobEntry>,
}

fn spec_and_blobs(layer: &Layer) -> (LayerSpec, Vec<(&'static str, &Tensor<f32>)>) {
    match layer {
        Layer::Conv2d(c) => (
            LayerSpec::Conv2d {
                in_channels: c.in_channels(),
                out_channels: c.out_channels(),
                kernel: c.kernel_size().into(),
                stride: c.stride,
                padding: c.padding,
            },
            vec![("kernels", &c.kernels), ("bias", &c.bias)],
        ),
        Layer::BatchNorm(bn) => (
            LayerSpec::BatchNorm {
                channels: bn.channels(),
                epsilon: bn.epsilon,
                momentum: bn.momentum,
            },
            vec![
                ("gamma", &bn.gamma),
                ("beta", &bn.beta),
                ("running_mean", &bn.running_mean),
                ("running_var", &bn.running_var),
            ],
        ),
        Layer::Relu => (LayerSpec::Relu, vec![]),
        Layer::MaxPool(p) => (
            LayerSpec::MaxPool {
                window: p.window,
                stride: p.stride,
            },
            vec![],
        ),
        Layer::Dropout(d) => (LayerSpec::Dropout { rate: d.rate }, vec![]),
        Layer::Flatten => (LayerSpec::Flatten, vec![]),
        Layer::Dense(d) => (
            LayerSpec::Dense {
                inputs: d.inputs(),
                outputs: d.outputs(),
            },
            vec![("weights", &d.weights), ("bias", &d.bias)],
        ),
        Layer::Softmax => (LayerSpec::Softmax, vec![]),
    }
}

/// Names and shapes of the blobs a layer spec expects, in body order.
fn expected_blobs(index: usize, spec: &LayerSpec) -> Vec<(String, Vec<usize>)> {
    let named = |parts: Vec<(&str, Vec<usize>)>| {
        parts
            .into_iter()
            .map(|(n, s)| (format!("layers.{index}.{n}"), s))
            .collect()
    };
    match *spec {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            ..
        } => named(vec![
            ("kernels", vec![out_channels, in_channels, kernel[0], kernel[1]]),
            ("bias", vec![out_channels]),
        ]),
        LayerSpec::BatchNorm { channels, .. } => named(vec![
            ("gamma", vec![channels]),
            ("beta", vec![channels]),
            ("running_mean", vec![channels]),
            ("running_var", vec![channels]),
        ]),
        LayerSpec::Dense { inputs, outputs } => named(vec![("weights", vec![inputs, outputs]), ("bias", vec![outputs])]),
        _ => vec![],
    }
}

/// Serializes a model. Equal models always produce identical bytes.
pub fn to_bytes(model: &Model) -> Vec<u8> {
    let mut layers = Vec::new();
    let mut manifest = Vec::new();
    let mut body = Vec::new();
    for (index, layer) in model.layers().iter().enumerate() {
        let (spec, blobs) = spec_and_blobs(layer);
        layers.push(spec);
        for (name, tensor) in blobs {
            let offset = body.len();
            for v in tensor.data() {
                body.extend_from_slice(&v.to_le_bytes());
            }
            manifest.push(BlobEntry {
                name: format!("layers.{index}.{name}"),
                shape: tensor.shape().to_vec(),
                offset,
                length: body.len() - offset,
            });
        }
    }
    let header = Header {
        input_shape: model.input_shape().to_vec(),
        layers,
        manifest,
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + header.len() + body.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&body);
    out
}

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    Some(u32::from_le_bytes(bytes.get(at..at + 4)?.try_into().ok()?))
}

/// Parses the fixed prefix and the JSON header; returns the header and the body.
pub fn read_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(StoreError::BadMagic(bytes[..bytes.len().min(4)].to_vec()));
    }
    let version = read_u32(bytes, 4).ok_or(StoreError::TruncatedHeader {
        declared: 4,
        available: bytes.len() - 4,
    })?;
    if version != FORMAT_VERSION {
        return Err(StoreError::UnsupportedVersion(version));
    }
    let declared = read_u32(bytes, 8).ok_or(StoreError::TruncatedHeader {
        declared: 4,
        available: bytes.len() - 8,
    })? as usize;
    let available = bytes.len() - 12;
    if declared > available {
        return Err(StoreError::TruncatedHeader { declared, available });
    }
    let header: Header = serde_json::from_slice(&bytes[12..12 + declared])?;
    Ok((header, &bytes[12 + declared..]))
}

fn check_manifest(header: &Header) -> Result<usize> {
    let expected: Vec<(String, Vec<usize>)> = header
        .layers
        .iter()
        .enumerate()
        .flat_map(|(i, spec)| expected_blobs(i, spec))
        .collect();
    if expected.len() != header.manifest.len() {
        return Err(StoreError::Manifest(format!(
            "layers need {} weight blobs, manifest lists {}",
            expected.len(),
            header.manifest.len()
        )));
    }
    let mut cursor = 0;
    for ((name, shape), entry) in expected.iter().zip(&header.manifest) {
        if &entry.name != name || &entry.shape != shape {
            return Err(StoreError::Manifest(format!(
                "expected blob {name} {shape:?}, found {} {:?}",
                entry.name, entry.shape
            )));
        }
        if entry.offset != cursor {
            return Err(StoreError::Manifest(format!(
                "blob {name} starts at byte {}, expected {cursor}",
                entry.offset
            )));
        }
        let length = shape.iter().product::<usize>() * 4;
        if entry.length != length {
            return Err(StoreError::Manifest(format!(
                "blob {name} of shape {shape:?} needs {length} bytes, manifest says {}",
                entry.length
            )));
        }
        cursor += length;
    }
    Ok(cursor)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    let (header, body) = read_header(bytes)?;
    let expected = check_manifest(&header)?;
    if body.len() < expected {
        return Err(StoreError::TruncatedBody {
            expected,
            actual: body.len(),
        });
    }
    if body.len() > expected {
        return Err(StoreError::Manifest(format!(
            "{} bytes follow the last blob",
            body.len() - expected
        )));
    }
    let mut blobs = header.manifest.iter().map(|entry| {
        let data = body[entry.offset..entry.offset + entry.length]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Tensor::new(&entry.shape, data).map_err(NnError::from)
    });
    let mut next = || blobs.next().expect("manifest checked against layers");

    let mut layers = Vec::with_capacity(header.layers.len());
    for spec in &header.layers {
        let layer = match *spec {
            LayerSpec::Conv2d { stride, padding, .. } => {
                let kernels = next()?;
                Layer::Conv2d(Conv2d::from_parts(kernels, next()?, stride, padding)?)
            }
            LayerSpec::BatchNorm {
                channels,
                epsilon,
                momentum,
            } => {
                let mut bn = BatchNorm::with_hyperparameters(channels, momentum, epsilon)?;
                bn.gamma = next()?;
                bn.beta = next()?;
                bn.running_mean = next()?;
                bn.running_var = next()?;
                if bn.running_var.data().iter().any(|&v| v < 0.0) {
                    return Err(NnError::NegativeRunningVar.into());
                }
                Layer::BatchNorm(bn)
            }
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::MaxPool { window, stride } => {
                if window == 0 || stride == 0 {
                    return Err(StoreError::Manifest("max-pool window and stride must be positive".into()));
                }
                Layer::MaxPool(MaxPool { window, stride })
            }
            LayerSpec::Dropout { rate } => Layer::Dropout(Dropout::new(rate)?),
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::Dense { .. } => {
                let weights = next()?;
                Layer::Dense(Dense::from_parts(weights, next()?)?)
            }
            LayerSpec::Softmax => Layer::Softmax,
        };
        layers.push(layer);
    }
    Ok(Model::new(&header.input_shape, layers)?)
}

/// Writes to a temporary file in the target directory, then renames it
/// into place.
pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(&to_bytes(model)).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Mode, Preset};
    use crate::rng::Rng;

    fn trained_tiny() -> Model {
        let mut model = Model::preset(Preset::FerTiny, &mut Rng::new(5)).unwrap();
        // One train-mode pass moves the running statistics off their defaults.
        let x = Tensor::sample_normal(&mut Rng::new(6), &[4, 1, 48, 48], 0.5, 0.2).unwrap();
        model.forward(&x, Mode::Train, &mut Rng::new(7)).unwrap();
        model
    }

    #[test]
    fn round_trip_is_exact() {
        let model = trained_tiny();
        let bytes = to_bytes(&model);
        let loaded = from_bytes(&bytes).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(to_bytes(&loaded), bytes);
        let x = Tensor::sample_normal(&mut Rng::new(8), &[3, 1, 48, 48], 0.5, 0.2).unwrap();
        let a = model.predict(&x).unwrap();
        let b = loaded.predict(&x).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn layout_prefix() {
        let bytes = to_bytes(&trained_tiny());
        assert_eq!(&bytes[..4], b"FERM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let (header, body) = read_header(&bytes).unwrap();
        assert_eq!(header.input_shape, vec![1, 48, 48]);
        let last = header.manifest.last().unwrap();
        assert_eq!(last.offset + last.length, body.len());
        assert_eq!(body.len(), 4 * header.manifest.iter().map(|e| e.shape.iter().product::<usize>()).sum::<usize>());
    }

    #[test]
    fn corruption_is_named() {
        let bytes = to_bytes(&trained_tiny());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(StoreError::BadMagic(_))));

        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(from_bytes(&bad), Err(StoreError::UnsupportedVersion(2))));

        let truncated = &bytes[..bytes.len() - 4];
        assert!(matches!(from_bytes(truncated), Err(StoreError::TruncatedBody { .. })));

        let mut long = bytes.clone();
        long.extend_from_slice(&[0; 4]);
        assert!(matches!(from_bytes(&long), Err(StoreError::Manifest(_))));

        let (mut header, body) = read_header(&bytes).unwrap();
        header.manifest[0].shape = vec![8, 1, 3, 4];
        let json = serde_json::to_vec(&header).unwrap();
        let mut bad = bytes[..8].to_vec();
        bad.extend_from_slice(&(json.len() as u32).to_le_bytes());
        bad.extend_from_slice(&json);
        bad.extend_from_slice(body);
        assert!(matches!(from_bytes(&bad), Err(StoreError::Manifest(_))));
    }

    #[test]
    fn files_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let model = trained_tiny();
        let a = dir.path().join("a.ferm");
        let b = dir.path().join("b.ferm");
        save_model(&model, &a).unwrap();
        save_model(&load_model(&a).unwrap(), &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert!(save_model(&model, dir.path().join("missing/dir/m.ferm")).is_err());
        assert!(matches!(load_model(dir.path().join("nope.ferm")), Err(StoreError::Io { .. })));
    }
}
