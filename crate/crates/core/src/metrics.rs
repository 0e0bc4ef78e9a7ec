//! Multi-rationale scoring: RR, RW, WR and WW.
//!
//! For one image, with `acc = |predicted ∩ truth| / |truth|`:
//!
//! | metric | category | value     |
//! |--------|----------|-----------|
//! | RR     | right    | `acc`     |
//! | RW     | right    | `1 - acc` |
//! | WR     | wrong    | `acc`     |
//! | WW     | wrong    | `1 - acc` |
//!
//! The four always sum to one. Aggregates are means expressed in percent.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::datastore::manifest::Sample;
use crate::error::{Error, Result};
use crate::search::PredictionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub rr: f64,
    pub rw: f64,
    pub wr: f64,
    pub ww: f64,
}

impl ImageMetrics {
    pub fn total(&self) -> f64 {
        self.rr + self.rw + self.wr + self.ww
    }

    pub fn category_right(&self) -> bool {
        self.rr + self.rw > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub rr: f64,
    pub rw: f64,
    pub wr: f64,
    pub ww: f64,
    pub count: usize,
}

impl AggregateMetrics {
    pub fn total(&self) -> f64 {
        self.rr + self.rw + self.wr + self.ww
    }
}

pub fn score_image(pred: &PredictionRecord, truth: &Sample) -> Result<ImageMetrics> {
    let gt: HashSet<&str> = truth.rationales.iter().map(String::as_str).collect();
    if gt.is_empty() {
        return Err(Error::EmptyGroundTruth(truth.image.clone()));
    }
    let predicted: HashSet<&str> = pred.rationales.iter().map(String::as_str).collect();
    let correct = predicted.intersection(&gt).count();
    let acc = correct as f64 / gt.len() as f64;
    let miss = 1.0 - acc;
    Ok(if pred.category == truth.category {
        ImageMetrics {
            rr: acc,
            rw: miss,
            ..Default::default()
        }
    } else {
        ImageMetrics {
            wr: acc,
            ww: miss,
            ..Default::default()
        }
    })
}

pub fn aggregate(metrics: &[ImageMetrics]) -> Result<AggregateMetrics> {
    if metrics.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = metrics.len() as f64;
    let mean = |f: fn(&ImageMetrics) -> f64| metrics.iter().map(f).sum::<f64>() / n * 100.0;
    Ok(AggregateMetrics {
        rr: mean(|m| m.rr),
        rw: mean(|m| m.rw),
        wr: mean(|m| m.wr),
        ww: mean(|m| m.ww),
        count: metrics.len(),
    })
}

/// A `(category, rationale, score)` triple from a pairwise baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPair {
    pub category: String,
    pub rationale: String,
    pub score: f64,
}

impl RankedPair {
    pub fn new(category: impl Into<String>, rationale: impl Into<String>, score: f64) -> Self {
        RankedPair {
            category: category.into(),
            rationale: rationale.into(),
            score,
        }
    }
}

/// Turns pairwise baseline scores into a prediction: the rationales of the
/// top-`m` pairs (deduplicated, in rank order) and the category of the best
/// pair. Pairs are ranked by descending score; equal scores keep input order.
pub fn baseline_top_m(image: &str, pairs: &[RankedPair], m: usize) -> Result<PredictionRecord> {
    if m == 0 {
        return Err(Error::InvalidConfig("M must be at least 1".into()));
    }
    let mut ranked: Vec<&RankedPair> = pairs.iter().collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut rationales: Vec<String> = Vec::with_capacity(m);
    for p in &ranked {
        if rationales.len() == m {
            break;
        }
        if !rationales.contains(&p.rationale) {
            rationales.push(p.rationale.clone());
        }
    }
    if rationales.len() < m {
        return Err(Error::InsufficientPairs {
            needed: m,
            found: rationales.len(),
        });
    }
    let top = ranked[0];
    Ok(PredictionRecord {
        image: image.to_string(),
        category: top.category.clone(),
        rationales,
        steps: Vec::new(),
        score: top.score,
    })
}
