//! The `CCIE` embedding store.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "CCIE"
//! 4       1     version (1)
//! 5       1     role (0 image, 1 category, 2 rationale, 3 prompt pair)
//! 6       4     dim, u32 LE
//! 10      4     count, u32 LE
//! 14      ...   count names: u16 LE byte length + UTF-8 bytes
//! ...     ...   count * dim f32 LE, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"CCIE";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 14;

/// Stored vectors whose norm is further than this from 1 are reported on load.
pub const NORM_WARN_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Image,
    Category,
    Rationale,
    PromptPair,
}

impl Role {
    pub fn tag(self) -> u8 {
        match self {
            Role::Image => 0,
            Role::Category => 1,
            Role::Rationale => 2,
            Role::PromptPair => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Role::Image),
            1 => Some(Role::Category),
            2 => Some(Role::Rationale),
            3 => Some(Role::PromptPair),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Image => "image",
            Role::Category => "category",
            Role::Rationale => "rationale",
            Role::PromptPair => "prompt_pair",
        }
    }
}

/// Raw contents of a `CCIE` file. Vectors are kept exactly as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    role: Role,
    dim: usize,
    names: Vec<String>,
    vectors: Vec<f32>,
}

impl EmbeddingStore {
    pub fn new(role: Role, dim: usize) -> Self {
        EmbeddingStore {
            role,
            dim,
            names: Vec::new(),
            vectors: Vec::new(),
        }
    }

    /// Converts a table to single precision.
    pub fn from_table(role: Role, table: &EmbeddingTable) -> Result<Self> {
        let mut store = EmbeddingStore::new(role, table.dim());
        for (name, row) in table.names().iter().zip(table.rows()) {
            let v: Vec<f32> = row.iter().map(|x| *x as f32).collect();
            store.push(name.clone(), &v)?;
        }
        Ok(store)
    }

    pub fn push(&mut self, name: impl Into<String>, v: &[f32]) -> Result<()> {
        let name = name.into();
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        if name.len() > u16::MAX as usize {
            return Err(Error::ParameterOutOfRange(format!(
                "name of {} bytes exceeds the 65535-byte limit",
                name.len()
            )));
        }
        if self.names.contains(&name) {
            return Err(Error::DuplicateName(name));
        }
        self.names.push(name);
        self.vectors.extend_from_slice(v);
        Ok(())
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// The whole vector block, row-major.
    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    /// Re-normalizes every vector in double precision.
    pub fn to_table(&self) -> Result<EmbeddingTable> {
        let mut table = EmbeddingTable::new(self.dim);
        for (i, name) in self.names.iter().enumerate() {
            let v: Vec<f64> = self.vector(i).iter().map(|x| f64::from(*x)).collect();
            table.push(name.clone(), &v)?;
        }
        Ok(table)
    }

    /// Largest deviation of a stored vector norm from 1.
    pub fn max_norm_deviation(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let n: f64 = self.vector(i).iter().map(|x| f64::from(*x).powi(2)).sum();
                (n.sqrt() - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn encode(&self) -> Vec<u8> {
        let names_len: usize = self.names.iter().map(|n| 2 + n.len()).sum();
        let mut out = Vec::with_capacity(HEADER_LEN + names_len + self.vectors.len() * 4);
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.role.tag());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.names.len() as u32).to_le_bytes());
        for name in &self.names {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        }
        for v in &self.vectors {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a store; `path` only labels errors.
    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let truncated = || Error::TruncatedFile {
            path: path.to_path_buf(),
        };
        if bytes.len() < 4 {
            return Err(if MAGIC.starts_with(bytes) {
                truncated()
            } else {
                Error::BadMagic {
                    path: path.to_path_buf(),
                }
            });
        }
        if bytes[..4] != MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(truncated());
        }
        if bytes[4] != VERSION {
            return Err(Error::VersionUnsupported {
                path: path.to_path_buf(),
                version: bytes[4],
            });
        }
        let role = Role::from_tag(bytes[5]).ok_or(Error::UnknownRole {
            path: path.to_path_buf(),
            tag: bytes[5],
        })?;
        let dim = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let count = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        if dim == 0 {
            return Err(Error::ParameterOutOfRange(format!(
                "{}: embedding dimension is zero",
                path.display()
            )));
        }

        let mut at = HEADER_LEN;
        let mut store = EmbeddingStore::new(role, dim);
        let mut names = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let len_bytes = bytes.get(at..at + 2).ok_or_else(truncated)?;
            let len = u16::from_le_bytes([len_bytes[0], len_bytes[1]]) as usize;
            at += 2;
            let raw = bytes.get(at..at + len).ok_or_else(truncated)?;
            let name = std::str::from_utf8(raw).map_err(|_| Error::BadName {
                path: path.to_path_buf(),
            })?;
            names.push(name.to_string());
            at += len;
        }

        let want = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(truncated)?;
        let rest = &bytes[at..];
        if rest.len() < want {
            return Err(truncated());
        }
        if rest.len() > want {
            return Err(Error::TrailingBytes {
                path: path.to_path_buf(),
                extra: rest.len() - want,
            });
        }
        let vectors: Vec<f32> = rest
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        for (i, name) in names.into_iter().enumerate() {
            store.push(name, &vectors[i * dim..(i + 1) * dim])?;
        }
        Ok(store)
    }
}

/// Reads and validates a store, warning when stored norms drift from 1.
pub fn load_store(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let store = EmbeddingStore::decode(&bytes, path)?;
    let dev = store.max_norm_deviation();
    if dev > NORM_WARN_TOLERANCE {
        log::warn!(
            "{}: stored vectors deviate from unit norm by up to {dev:.2e}; re-normalizing",
            path.display()
        );
    }
    Ok(store)
}

pub fn save_store(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, store.encode()).map_err(|e| Error::io(path, e))
}

/// Loads a store and checks its role.
pub fn load_store_as(path: impl AsRef<Path>, role: Role) -> Result<EmbeddingStore> {
    let store = load_store(&path)?;
    if store.role() != role {
        return Err(Error::RoleMismatch {
            expected: role.name(),
            found: store.role().name(),
        });
    }
    Ok(store)
}
