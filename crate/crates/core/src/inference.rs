//! Probabilistic scorers over an embedding table.
//!
//! * [`vanilla_infer`]: `P(c|x)`, a tempered softmax of `x . c`.
//! * [`cci`]: `P(c|x, r_1..r_M)`, a tempered softmax of each category's
//!   projected alignment with the desirable direction of the condition span.
//! * [`because_condition`]: the prompt-conditioning baseline, a softmax of
//!   `x . t(c, r)` over precomputed "because" prompt embeddings.

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::geometry::ConditionSubspace;
use crate::numkit::{argmax, dot, softmax, Temperature};

/// Separator between the category and rationale ids in prompt-pair names.
pub const PAIR_SEPARATOR: char = '\u{0}';

pub fn pair_name(category: &str, rationale: &str) -> String {
    format!("{category}{PAIR_SEPARATOR}{rationale}")
}

/// How a category is conditioned on rationales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Subspace projection.
    #[default]
    Cci,
    /// "because" prompt embeddings.
    Because,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cci" => Ok(Method::Cci),
            "because" => Ok(Method::Because),
            other => Err(format!("unknown method {other:?}")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Cci => "cci",
            Method::Because => "because",
        })
    }
}

/// Probabilities over an ordered set of ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub ids: Vec<String>,
    pub probs: Vec<f64>,
}

/// A distribution over categories.
pub type CategoryDistribution = Distribution;

impl Distribution {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn argmax(&self) -> Option<usize> {
        argmax(&self.probs)
    }

    pub fn best(&self) -> Option<(&str, f64)> {
        self.argmax().map(|i| (self.ids[i].as_str(), self.probs[i]))
    }

    pub fn prob(&self, id: &str) -> Option<f64> {
        self.ids.iter().position(|i| i == id).map(|i| self.probs[i])
    }
}

/// `softmax(tau * x . c)` over every row of `categories`.
pub fn vanilla_probs(x: &[f64], categories: &EmbeddingTable, tau: Temperature) -> Result<Vec<f64>> {
    if categories.is_empty() {
        return Err(Error::EmptyCategorySet);
    }
    check_dim(x, categories)?;
    softmax(&categories.similarities(x), tau)
}

pub fn vanilla_infer(
    x: &[f64],
    categories: &EmbeddingTable,
    tau: Temperature,
) -> Result<CategoryDistribution> {
    let probs = vanilla_probs(x, categories, tau)?;
    Ok(Distribution {
        ids: categories.names().to_vec(),
        probs,
    })
}

/// CCI logits `c_par . d` for every category against a prepared subspace.
pub fn cci_logits(sub: &ConditionSubspace, categories: &EmbeddingTable) -> Result<Vec<f64>> {
    categories.rows().map(|c| sub.logit(c)).collect()
}

/// `P(c | x, r_1..r_M)` as raw probabilities in table order.
pub fn cci_probs(
    x: &[f64],
    rationales: &[&[f64]],
    categories: &EmbeddingTable,
    tau: Temperature,
) -> Result<Vec<f64>> {
    if categories.is_empty() {
        return Err(Error::EmptyCategorySet);
    }
    check_dim(x, categories)?;
    let sub = ConditionSubspace::new(x, rationales)?;
    softmax(&cci_logits(&sub, categories)?, tau)
}

pub fn cci(
    x: &[f64],
    rationales: &[&[f64]],
    categories: &EmbeddingTable,
    tau: Temperature,
) -> Result<CategoryDistribution> {
    let probs = cci_probs(x, rationales, categories, tau)?;
    Ok(Distribution {
        ids: categories.names().to_vec(),
        probs,
    })
}

fn check_dim(x: &[f64], table: &EmbeddingTable) -> Result<()> {
    if x.len() != table.dim() {
        return Err(Error::DimensionMismatch {
            expected: table.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Prompt embeddings `t(c, r)` for "A photo of a <c> because there is <r>",
/// total over a category x rationale grid.
#[derive(Debug, Clone)]
pub struct PromptConditionTable {
    categories: Vec<String>,
    rationales: Vec<String>,
    dim: usize,
    // row-major: category * n_rationales + rationale
    grid: Vec<f64>,
}

/// Which axis of the prompt grid is held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixed<'a> {
    Category(&'a str),
    Rationale(&'a str),
}

impl PromptConditionTable {
    /// Assembles the grid from a prompt-pair table whose names are
    /// `category\0rationale`. Every cell of the grid must be present.
    pub fn from_pairs(
        pairs: &EmbeddingTable,
        categories: &[String],
        rationales: &[String],
    ) -> Result<Self> {
        let dim = pairs.dim();
        let mut grid = Vec::with_capacity(categories.len() * rationales.len() * dim);
        for c in categories {
            for r in rationales {
                let row =
                    pairs
                        .get(&pair_name(c, r))
                        .ok_or_else(|| Error::MissingPromptEmbedding {
                            category: c.clone(),
                            rationale: r.clone(),
                        })?;
                grid.extend_from_slice(row);
            }
        }
        Ok(PromptConditionTable {
            categories: categories.to_vec(),
            rationales: rationales.to_vec(),
            dim,
            grid,
        })
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn rationales(&self) -> &[String] {
        &self.rationales
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Prompt embedding for grid cell `(category index, rationale index)`.
    pub fn cell(&self, c: usize, r: usize) -> &[f64] {
        let at = (c * self.rationales.len() + r) * self.dim;
        &self.grid[at..at + self.dim]
    }

    pub fn category_index(&self, id: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == id)
    }

    pub fn rationale_index(&self, id: &str) -> Option<usize> {
        self.rationales.iter().position(|r| r == id)
    }
}

/// Baseline conditioning through prompt embeddings.
///
/// With a fixed rationale this is `P(c | r, x)` over categories; with a fixed
/// category it is `P(r | c, x)` over rationales.
pub fn because_condition(
    x: &[f64],
    fixed: Fixed<'_>,
    table: &PromptConditionTable,
    tau: Temperature,
) -> Result<Distribution> {
    if x.len() != table.dim {
        return Err(Error::DimensionMismatch {
            expected: table.dim,
            got: x.len(),
        });
    }
    let missing = |category: &str, rationale: &str| Error::MissingPromptEmbedding {
        category: category.to_string(),
        rationale: rationale.to_string(),
    };
    let (ids, logits): (&[String], Vec<f64>) = match fixed {
        Fixed::Rationale(r) => {
            let ri = table.rationale_index(r).ok_or_else(|| missing("*", r))?;
            let logits = (0..table.categories.len())
                .map(|ci| dot(x, table.cell(ci, ri)))
                .collect();
            (&table.categories, logits)
        }
        Fixed::Category(c) => {
            let ci = table.category_index(c).ok_or_else(|| missing(c, "*"))?;
            let logits = (0..table.rationales.len())
                .map(|ri| dot(x, table.cell(ci, ri)))
                .collect();
            (&table.rationales, logits)
        }
    };
    if logits.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(Distribution {
        ids: ids.to_vec(),
        probs: softmax(&logits, tau)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn tau(t: f64) -> Temperature {
        Temperature::new(t).unwrap()
    }

    #[test]
    fn method_parse() {
        assert_eq!("because".parse::<Method>().unwrap(), Method::Because);
        assert_eq!(Method::Cci.to_string(), "cci");
        assert!("x".parse::<Method>().is_err());
    }

    #[test]
    fn vanilla_closed_form() {
        let cats = EmbeddingTable::from_rows(2, [("c1", [1.0, 0.0]), ("c2", [0.0, 1.0])]).unwrap();
        let d = vanilla_infer(&[1.0, 0.0], &cats, tau(1.0)).unwrap();
        assert!((d.probs[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((d.probs[1] - 0.268_941_421_369_995_1).abs() < 1e-12);
        assert_eq!(d.best().unwrap().0, "c1");
    }

    #[test]
    fn vanilla_orthogonal_is_uniform() {
        let cats =
            EmbeddingTable::from_rows(3, [("a", [0.0, 1.0, 0.0]), ("b", [0.0, 0.0, 1.0])]).unwrap();
        for t in [0.5, 1.0, 100.0] {
            let d = vanilla_infer(&[1.0, 0.0, 0.0], &cats, tau(t)).unwrap();
            assert!((d.probs[0] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn vanilla_empty_categories() {
        let cats = EmbeddingTable::new(2);
        assert!(matches!(
            vanilla_infer(&[1.0, 0.0], &cats, tau(1.0)),
            Err(Error::EmptyCategorySet)
        ));
    }

    #[test]
    fn cci_forced_logits() {
        let cats =
            EmbeddingTable::from_rows(3, [("d", [H, H, 0.0]), ("z", [0.0, 0.0, 1.0])]).unwrap();
        let d = cci(&[1.0, 0.0, 0.0], &[&[0.0, 1.0, 0.0]], &cats, tau(1.0)).unwrap();
        assert!((d.probs[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((d.probs[1] - 0.268_941_421_369_995_1).abs() < 1e-12);
    }

    #[test]
    fn cci_propagates_degenerate_direction() {
        let cats = EmbeddingTable::from_rows(2, [("a", [1.0, 0.0])]).unwrap();
        assert!(matches!(
            cci(&[1.0, 0.0], &[&[-1.0, 0.0]], &cats, tau(1.0)),
            Err(Error::DegenerateDirection { .. })
        ));
    }

    fn grid() -> (PromptConditionTable, Vec<String>, Vec<String>) {
        let cats = vec!["c1".to_string(), "c2".to_string()];
        let rats = vec!["r1".to_string(), "r2".to_string()];
        let pairs = EmbeddingTable::from_rows(
            2,
            [
                (pair_name("c1", "r1"), [1.0, 0.0]),
                (pair_name("c1", "r2"), [0.0, 1.0]),
                (pair_name("c2", "r1"), [H, H]),
                (pair_name("c2", "r2"), [-1.0, 0.0]),
            ],
        )
        .unwrap();
        (
            PromptConditionTable::from_pairs(&pairs, &cats, &rats).unwrap(),
            cats,
            rats,
        )
    }

    #[test]
    fn because_forced_by_definition() {
        let (table, _, _) = grid();
        let x = [1.0, 0.0];
        let d = because_condition(&x, Fixed::Rationale("r1"), &table, tau(1.0)).unwrap();
        let want = softmax(&[1.0, H], tau(1.0)).unwrap();
        assert_eq!(d.ids, vec!["c1", "c2"]);
        assert!((d.probs[0] - want[0]).abs() < 1e-15);

        let d = because_condition(&x, Fixed::Category("c2"), &table, tau(1.0)).unwrap();
        let want = softmax(&[H, -1.0], tau(1.0)).unwrap();
        assert_eq!(d.ids, vec!["r1", "r2"]);
        assert!((d.probs[1] - want[1]).abs() < 1e-15);
    }

    #[test]
    fn because_identical_prompts_uniform() {
        let cats = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let rats = vec!["r".to_string()];
        let pairs =
            EmbeddingTable::from_rows(2, cats.iter().map(|c| (pair_name(c, "r"), [0.6, 0.8])))
                .unwrap();
        let table = PromptConditionTable::from_pairs(&pairs, &cats, &rats).unwrap();
        let d = because_condition(&[1.0, 0.0], Fixed::Rationale("r"), &table, tau(3.0)).unwrap();
        for p in d.probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn because_missing_cells() {
        let cats = vec!["c1".to_string(), "c2".to_string()];
        let rats = vec!["r1".to_string()];
        let pairs = EmbeddingTable::from_rows(2, [(pair_name("c1", "r1"), [1.0, 0.0])]).unwrap();
        let err = PromptConditionTable::from_pairs(&pairs, &cats, &rats).unwrap_err();
        assert!(
            matches!(err, Error::MissingPromptEmbedding { ref category, .. } if category == "c2")
        );

        let (table, _, _) = grid();
        assert!(matches!(
            because_condition(&[1.0, 0.0], Fixed::Rationale("nope"), &table, tau(1.0)),
            Err(Error::MissingPromptEmbedding { .. })
        ));
    }
}
