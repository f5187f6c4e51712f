//! IDX reader for MNIST-style image and label files, plain or gzip.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use thiserror::Error;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
/// Side length fed to the network.
pub const SIDE: usize = 20;
pub const INPUT_DIM: usize = SIDE * SIDE;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MnistError {
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{path}: bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { path: String, found: u32, expected: u32 },
    #[error("{path}: truncated, header promises {expected} bytes but {actual} are present")]
    Truncated { path: String, expected: usize, actual: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: unsupported image size {rows}x{cols}, need 28x28 or 20x20")]
    Dimensions { path: String, rows: usize, cols: usize },
    #[error("{path}: label {value} at index {index} is not a digit")]
    Label { path: String, index: usize, value: u8 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Row-major 20×20 images with pixels in `[0, 1]`.
    pub images: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// First `n` samples (all of them if `n` exceeds the length).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }
}

/// Raw IDX payload: dimension sizes and the data bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct Idx {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Decodes an unsigned-byte IDX stream. Gzip input is detected by its magic bytes.
pub fn parse_idx(bytes: &[u8], expected_magic: u32, path: &str) -> Result<Idx, MnistError> {
    let owned;
    let bytes = if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| MnistError::Io {
                path: path.to_string(),
                reason: format!("gzip: {e}"),
            })?;
        owned = out;
        &owned[..]
    } else {
        bytes
    };
    let word = |k: usize| -> Option<u32> {
        bytes
            .get(4 * k..4 * k + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    };
    let truncated = |expected: usize| MnistError::Truncated {
        path: path.to_string(),
        expected,
        actual: bytes.len(),
    };
    let magic = word(0).ok_or_else(|| truncated(4))?;
    if magic != expected_magic {
        return Err(MnistError::BadMagic {
            path: path.to_string(),
            found: magic,
            expected: expected_magic,
        });
    }
    let n_dims = (magic & 0xff) as usize;
    let header = 4 * (1 + n_dims);
    let dims: Vec<usize> = (1..=n_dims)
        .map(|k| word(k).map(|d| d as usize))
        .collect::<Option<_>>()
        .ok_or_else(|| truncated(header))?;
    let payload: usize = dims.iter().product();
    if bytes.len() < header + payload {
        return Err(truncated(header + payload));
    }
    Ok(Idx {
        dims,
        data: bytes[header..header + payload].to_vec(),
    })
}

/// Scales bytes to `[0, 1]` and crops 28×28 sources by a 4-pixel border.
pub fn decode_images(idx: &Idx, path: &str) -> Result<Vec<Vec<f64>>, MnistError> {
    let (n, rows, cols) = (idx.dims[0], idx.dims[1], idx.dims[2]);
    let border = match (rows, cols) {
        (28, 28) => 4,
        (20, 20) => 0,
        _ => {
            return Err(MnistError::Dimensions {
                path: path.to_string(),
                rows,
                cols,
            })
        }
    };
    Ok((0..n)
        .map(|k| {
            let img = &idx.data[k * rows * cols..(k + 1) * rows * cols];
            let mut out = Vec::with_capacity(INPUT_DIM);
            for r in border..border + SIDE {
                for c in border..border + SIDE {
                    out.push(f64::from(img[r * cols + c]) / 255.0);
                }
            }
            out
        })
        .collect())
}

fn read(path: &Path) -> Result<Vec<u8>, MnistError> {
    std::fs::read(path).map_err(|e| MnistError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub fn load_mnist(images_path: &Path, labels_path: &Path) -> Result<Dataset, MnistError> {
    let ip = images_path.display().to_string();
    let lp = labels_path.display().to_string();
    let images = parse_idx(&read(images_path)?, IMAGE_MAGIC, &ip)?;
    let labels = parse_idx(&read(labels_path)?, LABEL_MAGIC, &lp)?;
    let images = decode_images(&images, &ip)?;
    if let Some((index, &value)) = labels.data.iter().enumerate().find(|(_, &v)| v > 9) {
        return Err(MnistError::Label { path: lp, index, value });
    }
    if images.len() != labels.data.len() {
        return Err(MnistError::CountMismatch {
            images: images.len(),
            labels: labels.data.len(),
        });
    }
    Ok(Dataset {
        images,
        labels: labels.data,
    })
}

/// Serializes images as an uncompressed IDX3 file.
pub fn encode_idx_images(images: &[Vec<u8>], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for w in [IMAGE_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&w.to_be_bytes());
    }
    for img in images {
        assert_eq!(img.len(), rows * cols, "image size");
        out.extend_from_slice(img);
    }
    out
}

/// Serializes labels as an uncompressed IDX1 file.
pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
