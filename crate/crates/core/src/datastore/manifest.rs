//! Line-delimited JSON manifests, one image per line:
//!
//! ```text
//! {"image":"img00000","category":"cat003","rationales":["rat0012","rat0040"]}
//! ```

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub image: String,
    pub category: String,
    pub rationales: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    samples: Vec<Sample>,
    index: HashMap<String, usize>,
}

impl Manifest {
    /// Validates that image ids are unique and that every sample has a
    /// nonempty, duplicate-free rationale list.
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let mut index = HashMap::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            check_sample(s).map_err(|message| Error::BadManifest {
                line: i + 1,
                message,
            })?;
            if index.insert(s.image.clone(), i).is_some() {
                return Err(Error::DuplicateName(s.image.clone()));
            }
        }
        Ok(Manifest { samples, index })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, image: &str) -> Option<&Sample> {
        self.index.get(image).map(|&i| &self.samples[i])
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let s: Sample = serde_json::from_str(line).map_err(|e| Error::BadManifest {
                line: i + 1,
                message: e.to_string(),
            })?;
            samples.push(s);
        }
        Manifest::new(samples)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("sample serializes"));
            out.push('\n');
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Manifest::parse(&text).map_err(|e| match e {
            Error::BadManifest { line, message } => Error::BadManifest {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    /// Checks every referenced id against the given name lists.
    pub fn check_ids(
        &self,
        images: &dyn Fn(&str) -> bool,
        categories: &dyn Fn(&str) -> bool,
        rationales: &dyn Fn(&str) -> bool,
    ) -> Result<()> {
        let unknown = |kind, id: &str| Error::UnknownId {
            kind,
            id: id.to_string(),
        };
        for s in &self.samples {
            if !images(&s.image) {
                return Err(unknown("image", &s.image));
            }
            if !categories(&s.category) {
                return Err(unknown("category", &s.category));
            }
            if let Some(r) = s.rationales.iter().find(|r| !rationales(r)) {
                return Err(unknown("rationale", r));
            }
        }
        Ok(())
    }
}

fn check_sample(s: &Sample) -> std::result::Result<(), String> {
    if s.rationales.is_empty() {
        return Err(format!("image {:?} has no rationales", s.image));
    }
    let mut seen = HashSet::new();
    for r in &s.rationales {
        if !seen.insert(r) {
            return Err(format!("image {:?} lists rationale {r:?} twice", s.image));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_round_trip() {
        let text = r#"{"image":"a","category":"cat","rationales":["ears","fur"]}

{"image":"b","category":"dog","rationales":["tail"]}
"#;
        let m = Manifest::parse(text).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.get("b").unwrap().category, "dog");
        assert_eq!(Manifest::parse(&m.to_jsonl()).unwrap(), m);
    }

    #[test]
    fn rejects_bad_records() {
        let empty = r#"{"image":"a","category":"c","rationales":[]}"#;
        assert!(matches!(
            Manifest::parse(empty),
            Err(Error::BadManifest { line: 1, .. })
        ));
        let dup = r#"{"image":"a","category":"c","rationales":["r","r"]}"#;
        assert!(matches!(
            Manifest::parse(dup),
            Err(Error::BadManifest { .. })
        ));
        let twice = "{\"image\":\"a\",\"category\":\"c\",\"rationales\":[\"r\"]}\n\
                     {\"image\":\"a\",\"category\":\"c\",\"rationales\":[\"q\"]}";
        assert!(matches!(
            Manifest::parse(twice),
            Err(Error::DuplicateName(_))
        ));
        assert!(matches!(
            Manifest::parse("{\"image\": 3}"),
            Err(Error::BadManifest { .. })
        ));
    }

    #[test]
    fn id_checks() {
        let m = Manifest::parse(r#"{"image":"a","category":"c","rationales":["r","q"]}"#).unwrap();
        let yes = |_: &str| true;
        assert!(m.check_ids(&yes, &yes, &yes).is_ok());
        let err = m.check_ids(&yes, &yes, &|r: &str| r == "r").unwrap_err();
        assert!(matches!(err, Error::UnknownId { kind: "rationale", ref id } if id == "q"));
    }
}
