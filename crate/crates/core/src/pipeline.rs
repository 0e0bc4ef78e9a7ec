//! Dataset-level flows: batch inference, evaluation and oracle cross-checks.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::datastore::{Dataset, Manifest};
use crate::error::{Error, Result};
use crate::inference::{Method, PromptConditionTable};
use crate::metrics::{
    aggregate, baseline_top_m, score_image, AggregateMetrics, ImageMetrics, RankedPair,
};
use crate::numkit::{dot, Temperature};
use crate::parallel::{try_map, Workers};
use crate::search::{
    find_rationales_beam, find_rationales_greedy, oracle_exhaustive, PredictionRecord, ScoringMode,
    SearchConfig,
};

/// How many rationales to predict per image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MPolicy {
    /// The ground-truth rationale count of each sample.
    #[default]
    Auto,
    Fixed(usize),
}

impl std::str::FromStr for MPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(MPolicy::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(MPolicy::Fixed(n)),
            _ => Err(format!(
                "expected \"auto\" or a positive integer, got {s:?}"
            )),
        }
    }
}

impl std::fmt::Display for MPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MPolicy::Auto => f.write_str("auto"),
            MPolicy::Fixed(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferConfig {
    pub m: MPolicy,
    pub k_beam: usize,
    pub tau: Temperature,
    pub scoring: ScoringMode,
    pub method: Method,
    /// Use the dedicated greedy driver instead of beam search.
    pub greedy: bool,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            m: MPolicy::Auto,
            k_beam: 1,
            tau: Temperature::default(),
            scoring: ScoringMode::default(),
            method: Method::Cci,
            greedy: false,
        }
    }
}

fn resolve_m(policy: MPolicy, image: &str, manifest: Option<&Manifest>) -> Result<usize> {
    match policy {
        MPolicy::Fixed(n) => Ok(n),
        MPolicy::Auto => manifest
            .ok_or_else(|| Error::InvalidConfig("automatic M needs a manifest".into()))?
            .get(image)
            .map(|s| s.rationales.len())
            .ok_or_else(|| Error::UnknownImageId(image.to_string())),
    }
}

/// All `(category, rationale)` prompt scores `x . t(c, r)`, grid order.
pub fn rank_prompt_pairs(x: &[f64], grid: &PromptConditionTable) -> Vec<RankedPair> {
    let mut out = Vec::with_capacity(grid.categories().len() * grid.rationales().len());
    for (ci, c) in grid.categories().iter().enumerate() {
        for (ri, r) in grid.rationales().iter().enumerate() {
            out.push(RankedPair::new(
                c.clone(),
                r.clone(),
                dot(x, grid.cell(ci, ri)),
            ));
        }
    }
    out
}

/// Predicts every listed image. Output is sorted by image id.
pub fn infer_dataset(
    dataset: &Dataset,
    images: &[String],
    manifest: Option<&Manifest>,
    cfg: &InferConfig,
    workers: Workers,
) -> Result<Vec<PredictionRecord>> {
    if let Some(m) = manifest {
        dataset.check_manifest(m)?;
    }
    let grid = match cfg.method {
        Method::Because => Some(dataset.prompt_grid()?.ok_or_else(|| {
            Error::InvalidConfig("because conditioning needs a prompt-pair store".into())
        })?),
        Method::Cci => None,
    };
    let mut ids: Vec<&String> = images.iter().collect();
    ids.sort();
    let mut preds = try_map(&ids, workers, |image| {
        let x = dataset
            .images
            .get(image)
            .ok_or_else(|| Error::UnknownImageId(image.to_string()))?;
        let m = resolve_m(cfg.m, image, manifest)?;
        match &grid {
            Some(grid) => baseline_top_m(image, &rank_prompt_pairs(x, grid), m),
            None => {
                let sc = SearchConfig {
                    m,
                    k_beam: cfg.k_beam,
                    tau: cfg.tau,
                    scoring: cfg.scoring,
                };
                if cfg.greedy {
                    if cfg.k_beam != 1 {
                        return Err(Error::InvalidConfig(
                            "the greedy driver only supports k_beam = 1".into(),
                        ));
                    }
                    find_rationales_greedy(image, x, &dataset.rationales, &dataset.categories, &sc)
                } else {
                    find_rationales_beam(image, x, &dataset.rationales, &dataset.categories, &sc)
                }
            }
        }
    })?;
    preds.sort_by(|a, b| a.image.cmp(&b.image));
    Ok(preds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub image: String,
    #[serde(flatten)]
    pub metrics: ImageMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub aggregate: AggregateMetrics,
    pub per_image: Vec<ImageRow>,
}

/// Scores predictions against the manifest, in image-id order.
pub fn evaluate(predictions: &[PredictionRecord], manifest: &Manifest) -> Result<EvalReport> {
    let mut seen = HashSet::new();
    let mut rows = Vec::with_capacity(predictions.len());
    for p in predictions {
        let truth = manifest
            .get(&p.image)
            .ok_or_else(|| Error::UnknownImageId(p.image.clone()))?;
        if !seen.insert(p.image.as_str()) {
            return Err(Error::DuplicateName(p.image.clone()));
        }
        rows.push(ImageRow {
            image: p.image.clone(),
            metrics: score_image(p, truth)?,
        });
    }
    rows.sort_by(|a, b| a.image.cmp(&b.image));
    let all: Vec<ImageMetrics> = rows.iter().map(|r| r.metrics).collect();
    Ok(EvalReport {
        aggregate: aggregate(&all)?,
        per_image: rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub image: String,
    pub search_score: f64,
    pub oracle_score: f64,
    /// Same rationale set and category as the oracle.
    pub same_winner: bool,
    pub search: PredictionRecord,
    pub oracle: PredictionRecord,
}

/// Runs the configured search and the exhaustive oracle side by side.
pub fn oracle_check(
    dataset: &Dataset,
    images: &[String],
    manifest: Option<&Manifest>,
    cfg: &InferConfig,
    workers: Workers,
) -> Result<Vec<OracleRow>> {
    let mut ids: Vec<&String> = images.iter().collect();
    ids.sort();
    try_map(&ids, workers, |image| {
        let x = dataset
            .images
            .get(image)
            .ok_or_else(|| Error::UnknownImageId(image.to_string()))?;
        let sc = SearchConfig {
            m: resolve_m(cfg.m, image, manifest)?,
            k_beam: cfg.k_beam,
            tau: cfg.tau,
            scoring: cfg.scoring,
        };
        let (r, c) = (&dataset.rationales, &dataset.categories);
        let search = if cfg.greedy {
            find_rationales_greedy(image, x, r, c, &sc)?
        } else {
            find_rationales_beam(image, x, r, c, &sc)?
        };
        let oracle = oracle_exhaustive(image, x, r, c, &sc)?;
        Ok(OracleRow {
            image: image.to_string(),
            search_score: search.score,
            oracle_score: oracle.score,
            same_winner: same_winner(&search, &oracle),
            search,
            oracle,
        })
    })
}

/// Equal category and equal rationale sets, ignoring selection order.
pub fn same_winner(a: &PredictionRecord, b: &PredictionRecord) -> bool {
    let set = |p: &PredictionRecord| p.rationales.iter().cloned().collect::<HashSet<_>>();
    a.category == b.category && set(a) == set(b)
}
