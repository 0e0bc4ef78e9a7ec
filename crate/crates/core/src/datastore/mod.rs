//! On-disk formats and the in-memory dataset they load into.

pub mod fixture;
pub mod manifest;
pub mod store;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::inference::PromptConditionTable;

pub use fixture::{generate_fixture, Fixture, FixtureParams};
pub use manifest::{Manifest, Sample};
pub use store::{load_store, load_store_as, save_store, EmbeddingStore, Role};

/// Normalized embedding tables for one dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: EmbeddingTable,
    pub categories: EmbeddingTable,
    pub rationales: EmbeddingTable,
    pub prompts: Option<EmbeddingTable>,
}

impl Dataset {
    pub fn from_stores(
        images: &EmbeddingStore,
        categories: &EmbeddingStore,
        rationales: &EmbeddingStore,
        prompts: Option<&EmbeddingStore>,
    ) -> Result<Self> {
        let expect = |s: &EmbeddingStore, role: Role| {
            if s.role() == role {
                Ok(())
            } else {
                Err(Error::RoleMismatch {
                    expected: role.name(),
                    found: s.role().name(),
                })
            }
        };
        expect(images, Role::Image)?;
        expect(categories, Role::Category)?;
        expect(rationales, Role::Rationale)?;
        if let Some(p) = prompts {
            expect(p, Role::PromptPair)?;
        }
        let dim = images.dim();
        for s in [Some(categories), Some(rationales), prompts]
            .into_iter()
            .flatten()
        {
            if s.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.dim(),
                });
            }
        }
        Ok(Dataset {
            images: images.to_table()?,
            categories: categories.to_table()?,
            rationales: rationales.to_table()?,
            prompts: prompts.map(EmbeddingStore::to_table).transpose()?,
        })
    }

    pub fn from_fixture(f: &Fixture) -> Result<Self> {
        Dataset::from_stores(&f.images, &f.categories, &f.rationales, Some(&f.prompts))
    }

    pub fn dim(&self) -> usize {
        self.images.dim()
    }

    /// The full category x rationale prompt grid, if prompts were loaded.
    pub fn prompt_grid(&self) -> Result<Option<PromptConditionTable>> {
        self.prompts
            .as_ref()
            .map(|p| {
                PromptConditionTable::from_pairs(
                    p,
                    self.categories.names(),
                    self.rationales.names(),
                )
            })
            .transpose()
    }

    /// Every id in the manifest must resolve against the loaded stores.
    pub fn check_manifest(&self, manifest: &Manifest) -> Result<()> {
        manifest.check_ids(
            &|i| self.images.index_of(i).is_some(),
            &|c| self.categories.index_of(c).is_some(),
            &|r| self.rationales.index_of(r).is_some(),
        )
    }
}

/// Writes one JSON object per line.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_jsonl(items)).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::Json {
                path: path.to_path_buf(),
                source: e,
            })
        })
        .collect()
}

/// Writes a single pretty-printed JSON document.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_checks_roles_and_dims() {
        let f = generate_fixture(&FixtureParams {
            dim: 8,
            n_images: 5,
            n_categories: 2,
            n_rationales: 6,
            rationales_per_image: 2,
            ..Default::default()
        })
        .unwrap();
        let ds = Dataset::from_fixture(&f).unwrap();
        assert_eq!(ds.dim(), 8);
        ds.check_manifest(&f.manifest).unwrap();
        let grid = ds.prompt_grid().unwrap().unwrap();
        assert_eq!(grid.categories().len(), 2);

        let err =
            Dataset::from_stores(&f.categories, &f.categories, &f.rationales, None).unwrap_err();
        assert!(matches!(err, Error::RoleMismatch { .. }));

        let other = EmbeddingStore::new(Role::Category, 4);
        let err = Dataset::from_stores(&f.images, &other, &f.rationales, None).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }
}
