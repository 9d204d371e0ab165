//! `LREN` v1 tensor container.
//!
//! ```text
//! "LREN" | version: u32 LE | manifest_len: u64 LE | manifest (UTF-8 JSON) | payloads
//! ```
//!
//! The manifest is canonical JSON: object keys sorted, no whitespace, so equal
//! content always yields equal bytes. Each payload is a row-major run of
//! IEEE-754 binary64 little-endian values; `byte_offset` is measured from the
//! first payload byte and payloads are stored contiguously in manifest order.
//! Every tensor carries a CRC-32 (IEEE) of its payload bytes.

mod artifacts;

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

pub use artifacts::{
    assemble_protected, baseline_container, deployed_layers, protected_layer_from_parts, read_baseline,
    split_artifacts, DeployedLayer, ProtectedModel,
};

pub const MAGIC: [u8; 4] = *b"LREN";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("CRC mismatch in tensor '{tensor}': stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { tensor: String, stored: u32, computed: u32 },
    #[error("truncated file: need {needed} bytes, have {available}")]
    Truncated { needed: u64, available: u64 },
    #[error("{0} unexpected trailing bytes")]
    TrailingData(u64),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("inconsistent container: {0}")]
    Inconsistent(String),
    #[error("missing tensor '{0}'")]
    MissingTensor(String),
    #[error(transparent)]
    Pipeline(#[from] crate::Error),
}

impl ContainerError {
    /// Stable machine-readable code per failure class.
    pub fn code(&self) -> &'static str {
        match self {
            ContainerError::Io(_) => "io",
            ContainerError::BadMagic(_) => "bad_magic",
            ContainerError::UnsupportedVersion(_) => "unsupported_version",
            ContainerError::CrcMismatch { .. } => "crc_mismatch",
            ContainerError::Truncated { .. } => "truncated",
            ContainerError::TrailingData(_) => "trailing_data",
            ContainerError::Manifest(_) => "bad_manifest",
            ContainerError::Inconsistent(_) => "inconsistent",
            ContainerError::MissingTensor(_) => "missing_tensor",
            ContainerError::Pipeline(_) => "pipeline",
        }
    }

    /// Whether the bytes on disk are damaged or malformed, as opposed to the
    /// file being absent or incomplete for the requested operation.
    pub fn is_corruption(&self) -> bool {
        matches!(
            self,
            ContainerError::BadMagic(_)
                | ContainerError::UnsupportedVersion(_)
                | ContainerError::CrcMismatch { .. }
                | ContainerError::Truncated { .. }
                | ContainerError::TrailingData(_)
                | ContainerError::Manifest(_)
                | ContainerError::Inconsistent(_)
        )
    }
}

pub type ContainerResult<T> = std::result::Result<T, ContainerError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TensorRole {
    #[serde(rename = "weight_trunc")]
    WeightTrunc,
    #[serde(rename = "adapter_B")]
    AdapterB,
    #[serde(rename = "adapter_A")]
    AdapterA,
    #[serde(rename = "key_KB")]
    KeyKb,
    #[serde(rename = "key_KA")]
    KeyKa,
    #[serde(rename = "baseline_W")]
    BaselineW,
    #[serde(rename = "lora_B")]
    LoraB,
    #[serde(rename = "lora_A")]
    LoraA,
}

impl TensorRole {
    pub fn is_key(self) -> bool {
        matches!(self, TensorRole::KeyKb | TensorRole::KeyKa)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub role: TensorRole,
    pub rows: u64,
    pub cols: u64,
    pub byte_offset: u64,
    pub byte_length: u64,
    pub crc32: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerKind {
    Baseline,
    Deploy,
    Keystore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub kind: ContainerKind,
    pub delta_r: u64,
    pub base_rank: u64,
    pub master_seed: u64,
    pub layers: Vec<String>,
    pub adapter_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerManifest {
    pub format_version: u32,
    pub model_meta: ModelMeta,
    pub tensors: Vec<TensorRecord>,
}

impl ContainerManifest {
    /// Canonical JSON bytes: sorted keys, no insignificant whitespace.
    pub fn to_canonical_json(&self) -> ContainerResult<String> {
        let value = serde_json::to_value(self).map_err(|e| ContainerError::Manifest(e.to_string()))?;
        let mut out = String::new();
        write_canonical(&value, &mut out);
        Ok(out)
    }
}

fn write_canonical(value: &serde_json::Value, out: &mut String) {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(key.clone()).to_string());
                out.push(':');
                write_canonical(&map[key], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

fn encode_payload(m: &Matrix) -> Vec<u8> {
    m.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// A manifest plus its tensors, index-aligned with `manifest.tensors`.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub manifest: ContainerManifest,
    pub tensors: Vec<Matrix>,
}

impl Container {
    /// Lays out the given tensors contiguously and fills in offsets and CRCs.
    pub fn build(meta: ModelMeta, entries: Vec<(String, TensorRole, Matrix)>) -> Self {
        let mut records = Vec::with_capacity(entries.len());
        let mut tensors = Vec::with_capacity(entries.len());
        let mut offset = 0u64;
        for (name, role, m) in entries {
            let bytes = encode_payload(&m);
            let len = bytes.len() as u64;
            records.push(TensorRecord {
                name,
                role,
                rows: m.rows() as u64,
                cols: m.cols() as u64,
                byte_offset: offset,
                byte_length: len,
                crc32: crc32fast::hash(&bytes),
            });
            offset += len;
            tensors.push(m);
        }
        Self {
            manifest: ContainerManifest {
                format_version: FORMAT_VERSION,
                model_meta: meta,
                tensors: records,
            },
            tensors,
        }
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.manifest.model_meta
    }

    pub fn records(&self) -> &[TensorRecord] {
        &self.manifest.tensors
    }

    pub fn get(&self, name: &str) -> Option<(&TensorRecord, &Matrix)> {
        self.manifest
            .tensors
            .iter()
            .position(|r| r.name == name)
            .map(|i| (&self.manifest.tensors[i], &self.tensors[i]))
    }

    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.get(name).map(|(_, m)| m)
    }

    /// Looks a tensor up by name, checking its role.
    pub fn require(&self, name: &str, role: TensorRole) -> ContainerResult<&Matrix> {
        match self.get(name) {
            Some((rec, m)) if rec.role == role => Ok(m),
            Some((rec, _)) => Err(ContainerError::Inconsistent(format!(
                "tensor '{name}' has role {:?}, expected {role:?}",
                rec.role
            ))),
            None => Err(ContainerError::MissingTensor(name.to_string())),
        }
    }

    fn validate(&self) -> ContainerResult<()> {
        let records = &self.manifest.tensors;
        if self.manifest.format_version != FORMAT_VERSION {
            return Err(ContainerError::UnsupportedVersion(self.manifest.format_version));
        }
        if records.len() != self.tensors.len() {
            return Err(ContainerError::Inconsistent(format!(
                "{} records for {} tensors",
                records.len(),
                self.tensors.len()
            )));
        }
        let mut expected_offset = 0u64;
        let mut names = std::collections::HashSet::new();
        for (rec, m) in records.iter().zip(&self.tensors) {
            if !names.insert(rec.name.as_str()) {
                return Err(ContainerError::Inconsistent(format!(
                    "duplicate tensor name '{}'",
                    rec.name
                )));
            }
            if (rec.rows, rec.cols) != (m.rows() as u64, m.cols() as u64) {
                return Err(ContainerError::Inconsistent(format!(
                    "tensor '{}' declared {}x{} but holds {}x{}",
                    rec.name,
                    rec.rows,
                    rec.cols,
                    m.rows(),
                    m.cols()
                )));
            }
            if rec.byte_offset != expected_offset || rec.byte_length != rec.rows * rec.cols * 8 {
                return Err(ContainerError::Inconsistent(format!(
                    "tensor '{}' has offset/length {}/{}, expected {}/{}",
                    rec.name,
                    rec.byte_offset,
                    rec.byte_length,
                    expected_offset,
                    rec.rows * rec.cols * 8
                )));
            }
            let computed = crc32fast::hash(&encode_payload(m));
            if computed != rec.crc32 {
                return Err(ContainerError::Inconsistent(format!(
                    "tensor '{}' CRC {:#010x} does not match its data ({computed:#010x})",
                    rec.name, rec.crc32
                )));
            }
            expected_offset += rec.byte_length;
        }
        Ok(())
    }

    /// Serialized file bytes. Fails if the manifest does not describe the tensors.
    pub fn to_bytes(&self) -> ContainerResult<Vec<u8>> {
        self.validate()?;
        let manifest = self.manifest.to_canonical_json()?;
        let payload_len: u64 = self.manifest.tensors.iter().map(|r| r.byte_length).sum();
        let mut out = Vec::with_capacity(HEADER_LEN + manifest.len() + payload_len as usize);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        for m in &self.tensors {
            out.extend_from_slice(&encode_payload(m));
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> ContainerResult<Self> {
        let available = bytes.len() as u64;
        if bytes.len() < HEADER_LEN {
            if bytes.len() >= 4 && bytes[..4] != MAGIC {
                return Err(ContainerError::BadMagic(bytes[..4].try_into().unwrap()));
            }
            return Err(ContainerError::Truncated {
                needed: HEADER_LEN as u64,
                available,
            });
        }
        let magic: [u8; 4] = bytes[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(ContainerError::BadMagic(magic));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(ContainerError::UnsupportedVersion(version));
        }
        let manifest_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let manifest_end = (HEADER_LEN as u64)
            .checked_add(manifest_len)
            .ok_or(ContainerError::Truncated {
                needed: u64::MAX,
                available,
            })?;
        if manifest_end > available {
            return Err(ContainerError::Truncated {
                needed: manifest_end,
                available,
            });
        }
        let manifest_end = manifest_end as usize;
        let text = std::str::from_utf8(&bytes[HEADER_LEN..manifest_end])
            .map_err(|e| ContainerError::Manifest(e.to_string()))?;
        let manifest: ContainerManifest =
            serde_json::from_str(text).map_err(|e| ContainerError::Manifest(e.to_string()))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(ContainerError::UnsupportedVersion(manifest.format_version));
        }

        let payload = &bytes[manifest_end..];
        let mut expected_offset = 0u64;
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for rec in &manifest.tensors {
            let want = rec
                .rows
                .checked_mul(rec.cols)
                .and_then(|c| c.checked_mul(8))
                .ok_or_else(|| ContainerError::Manifest(format!("tensor '{}' size overflows", rec.name)))?;
            if rec.rows == 0 || rec.cols == 0 || rec.byte_length != want {
                return Err(ContainerError::Manifest(format!(
                    "tensor '{}' declares {}x{} with byte_length {}",
                    rec.name, rec.rows, rec.cols, rec.byte_length
                )));
            }
            if rec.byte_offset != expected_offset {
                return Err(ContainerError::Manifest(format!(
                    "tensor '{}' offset {} is not contiguous (expected {expected_offset})",
                    rec.name, rec.byte_offset
                )));
            }
            let end = rec.byte_offset + rec.byte_length;
            if end > payload.len() as u64 {
                return Err(ContainerError::Truncated {
                    needed: manifest_end as u64 + end,
                    available,
                });
            }
            let chunk = &payload[rec.byte_offset as usize..end as usize];
            let computed = crc32fast::hash(chunk);
            if computed != rec.crc32 {
                return Err(ContainerError::CrcMismatch {
                    tensor: rec.name.clone(),
                    stored: rec.crc32,
                    computed,
                });
            }
            let values = chunk
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let m = Matrix::new(rec.rows as usize, rec.cols as usize, values)
                .map_err(|e| ContainerError::Manifest(format!("tensor '{}': {e}", rec.name)))?;
            tensors.push(m);
            expected_offset = end;
        }
        let extra = payload.len() as u64 - expected_offset;
        if extra != 0 {
            return Err(ContainerError::TrailingData(extra));
        }
        Ok(Self { manifest, tensors })
    }
}

/// Writes atomically: the bytes go to a sibling temp file which is then
/// renamed over `path`.
pub fn write_container(path: &Path, container: &Container) -> ContainerResult<()> {
    let bytes = container.to_bytes()?;
    let file_name = path
        .file_name()
        .ok_or_else(|| ContainerError::Inconsistent(format!("'{}' is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(ContainerError::from)
}

pub fn read_container(path: &Path) -> ContainerResult<Container> {
    Container::from_bytes(&fs::read(path)?)
}
