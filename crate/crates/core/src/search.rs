//! Rationale-set search maximising `P(r_1..r_M | x) P(c | r_1..r_M, x)`.
//!
//! Rationales are added one at a time. At each step every remaining
//! candidate `r'` gets a prior `p(r')` from a softmax of `x . r'`, and the
//! joint `p(r') * P(c | x, selected + r')` is maximised over `(r', c)`.
//!
//! Three drivers share the step scoring: [`find_rationales_greedy`],
//! [`find_rationales_beam`] (width 1 reproduces greedy bit for bit) and the
//! brute-force [`oracle_exhaustive`].

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::geometry::min_pairwise_dot;
use crate::inference::cci_probs;
use crate::numkit::{argmax, softmax, Temperature};

/// Upper bound on the number of subsets the exhaustive oracle will visit.
pub const ORACLE_LIMIT: u128 = 10_000;

/// How the per-step rationale prior is normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringMode {
    /// Softmax over the rationales not yet selected, recomputed every step.
    #[default]
    Renormalized,
    /// One softmax over the full rationale set, sliced at every step.
    Static,
}

impl std::str::FromStr for ScoringMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "renormalized" => Ok(ScoringMode::Renormalized),
            "static" => Ok(ScoringMode::Static),
            other => Err(format!("unknown scoring mode {other:?}")),
        }
    }
}

impl std::fmt::Display for ScoringMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoringMode::Renormalized => "renormalized",
            ScoringMode::Static => "static",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Number of rationales to select.
    pub m: usize,
    pub k_beam: usize,
    pub tau: Temperature,
    pub scoring: ScoringMode,
}

impl SearchConfig {
    pub fn new(m: usize) -> Self {
        SearchConfig {
            m,
            k_beam: 1,
            tau: Temperature::default(),
            scoring: ScoringMode::default(),
        }
    }

    pub fn with_beam(mut self, k_beam: usize) -> Self {
        self.k_beam = k_beam;
        self
    }

    pub fn with_tau(mut self, tau: Temperature) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_scoring(mut self, scoring: ScoringMode) -> Self {
        self.scoring = scoring;
        self
    }

    fn validate(&self, rationales: &EmbeddingTable, categories: &EmbeddingTable) -> Result<()> {
        if categories.is_empty() {
            return Err(Error::EmptyCategorySet);
        }
        if self.m == 0 {
            return Err(Error::InvalidConfig("M must be at least 1".into()));
        }
        if self.k_beam == 0 {
            return Err(Error::InvalidConfig("k_beam must be at least 1".into()));
        }
        if rationales.len() < self.m {
            return Err(Error::InsufficientRationales {
                needed: self.m,
                available: rationales.len(),
            });
        }
        let dim = rationales.dim();
        if self.m >= dim {
            return Err(Error::TooManyConditions {
                conditions: self.m,
                dim,
            });
        }
        if categories.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: categories.dim(),
            });
        }
        Ok(())
    }
}

/// Scores recorded for one selection step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepScore {
    pub rationale: String,
    /// Prior `p(r')` of the chosen rationale at this step.
    pub rationale_prob: f64,
    /// Best category given the rationales selected so far.
    pub category: String,
    pub category_prob: f64,
    /// `rationale_prob * category_prob`.
    pub joint: f64,
    /// Smallest dot product among the image and the selected rationales.
    pub min_pairwise_dot: f64,
}

/// The prediction for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image: String,
    pub category: String,
    /// In selection order.
    pub rationales: Vec<String>,
    pub steps: Vec<StepScore>,
    /// Product of per-step rationale priors times the final category
    /// probability.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct StepEval {
    rationale: usize,
    rationale_prob: f64,
    category: usize,
    category_prob: f64,
    joint: f64,
    min_dot: f64,
}

/// Shared scoring for one image.
struct Scorer<'a> {
    x: &'a [f64],
    rationales: &'a EmbeddingTable,
    categories: &'a EmbeddingTable,
    cfg: SearchConfig,
    logits: Vec<f64>,
    full_probs: Option<Vec<f64>>,
}

impl<'a> Scorer<'a> {
    fn new(
        x: &'a [f64],
        rationales: &'a EmbeddingTable,
        categories: &'a EmbeddingTable,
        cfg: &SearchConfig,
    ) -> Result<Self> {
        cfg.validate(rationales, categories)?;
        if x.len() != rationales.dim() {
            return Err(Error::DimensionMismatch {
                expected: rationales.dim(),
                got: x.len(),
            });
        }
        let logits = rationales.similarities(x);
        let full_probs = match cfg.scoring {
            ScoringMode::Static => Some(softmax(&logits, cfg.tau)?),
            ScoringMode::Renormalized => None,
        };
        Ok(Scorer {
            x,
            rationales,
            categories,
            cfg: *cfg,
            logits,
            full_probs,
        })
    }

    /// Remaining candidates in table order with their priors.
    fn candidates(&self, selected: &[usize]) -> Result<Vec<(usize, f64)>> {
        let remaining: Vec<usize> = (0..self.rationales.len())
            .filter(|i| !selected.contains(i))
            .collect();
        match &self.full_probs {
            Some(full) => Ok(remaining.iter().map(|&i| (i, full[i])).collect()),
            None => {
                let logits: Vec<f64> = remaining.iter().map(|&i| self.logits[i]).collect();
                let probs = softmax(&logits, self.cfg.tau)?;
                Ok(remaining.into_iter().zip(probs).collect())
            }
        }
    }

    fn conditions(&self, selected: &[usize], extra: usize) -> Vec<&'a [f64]> {
        let rationales = self.rationales;
        selected
            .iter()
            .chain(std::iter::once(&extra))
            .map(|&i| rationales.row(i))
            .collect()
    }

    /// Best category for `selected + r` and the joint score with prior `p`.
    fn evaluate(&self, selected: &[usize], r: usize, p: f64) -> Result<StepEval> {
        let conds = self.conditions(selected, r);
        let probs = cci_probs(self.x, &conds, self.categories, self.cfg.tau)?;
        let mut best: Option<(usize, f64, f64)> = None;
        for (c, pc) in probs.iter().enumerate() {
            let joint = p * pc;
            if best.is_none_or(|(_, _, j)| joint > j) {
                best = Some((c, *pc, joint));
            }
        }
        let (category, category_prob, joint) = best.ok_or(Error::EmptyCategorySet)?;
        let mut all = Vec::with_capacity(conds.len() + 1);
        all.push(self.x);
        all.extend(conds);
        Ok(StepEval {
            rationale: r,
            rationale_prob: p,
            category,
            category_prob,
            joint,
            min_dot: min_pairwise_dot(&all).unwrap_or(1.0),
        })
    }

    /// Step scores along a fixed selection order.
    fn trace(&self, sequence: &[usize]) -> Result<Vec<StepEval>> {
        let mut steps = Vec::with_capacity(sequence.len());
        for (i, &r) in sequence.iter().enumerate() {
            let prefix = &sequence[..i];
            let p = self
                .candidates(prefix)?
                .into_iter()
                .find(|(j, _)| *j == r)
                .map(|(_, p)| p)
                .ok_or_else(|| Error::InvalidConfig("rationale selected twice".into()))?;
            steps.push(self.evaluate(prefix, r, p)?);
        }
        Ok(steps)
    }

    fn record(&self, image: &str, steps: &[StepEval]) -> PredictionRecord {
        let last = steps.last().expect("search selects at least one rationale");
        PredictionRecord {
            image: image.to_string(),
            category: self.categories.name(last.category).to_string(),
            rationales: steps
                .iter()
                .map(|s| self.rationales.name(s.rationale).to_string())
                .collect(),
            steps: steps
                .iter()
                .map(|s| StepScore {
                    rationale: self.rationales.name(s.rationale).to_string(),
                    rationale_prob: s.rationale_prob,
                    category: self.categories.name(s.category).to_string(),
                    category_prob: s.category_prob,
                    joint: s.joint,
                    min_pairwise_dot: s.min_dot,
                })
                .collect(),
            score: cumulative_score(steps),
        }
    }
}

fn prefix_product(steps: &[StepEval]) -> f64 {
    steps.iter().fold(1.0, |acc, s| acc * s.rationale_prob)
}

/// Product of earlier priors times the last step's joint.
fn cumulative_score(steps: &[StepEval]) -> f64 {
    match steps.split_last() {
        Some((last, earlier)) => prefix_product(earlier) * last.joint,
        None => 0.0,
    }
}

/// Iterative selection with a single hypothesis. Ties go to the earlier
/// rationale, then the earlier category.
pub fn find_rationales_greedy(
    image: &str,
    x: &[f64],
    rationales: &EmbeddingTable,
    categories: &EmbeddingTable,
    cfg: &SearchConfig,
) -> Result<PredictionRecord> {
    let scorer = Scorer::new(x, rationales, categories, cfg)?;
    let mut selected = Vec::with_capacity(cfg.m);
    let mut steps: Vec<StepEval> = Vec::with_capacity(cfg.m);
    for _ in 0..cfg.m {
        let mut best: Option<StepEval> = None;
        for (r, p) in scorer.candidates(&selected)? {
            let e = scorer.evaluate(&selected, r, p)?;
            if best.is_none_or(|b| e.joint > b.joint) {
                best = Some(e);
            }
        }
        let best = best.expect("candidate set is nonempty");
        selected.push(best.rationale);
        steps.push(best);
    }
    Ok(scorer.record(image, &steps))
}

struct Hypothesis {
    selected: Vec<usize>,
    steps: Vec<StepEval>,
    prefix: f64,
    score: f64,
}

/// Beam search over ordered rationale sequences, keeping the `k_beam` best
/// partial sequences by cumulative score at every step.
pub fn find_rationales_beam(
    image: &str,
    x: &[f64],
    rationales: &EmbeddingTable,
    categories: &EmbeddingTable,
    cfg: &SearchConfig,
) -> Result<PredictionRecord> {
    let scorer = Scorer::new(x, rationales, categories, cfg)?;
    let mut beam = vec![Hypothesis {
        selected: Vec::new(),
        steps: Vec::new(),
        prefix: 1.0,
        score: 1.0,
    }];
    for _ in 0..cfg.m {
        let mut children: Vec<(usize, Hypothesis)> = Vec::new();
        for (rank, h) in beam.iter().enumerate() {
            for (r, p) in scorer.candidates(&h.selected)? {
                let e = scorer.evaluate(&h.selected, r, p)?;
                let mut selected = h.selected.clone();
                selected.push(r);
                let mut steps = h.steps.clone();
                steps.push(e);
                children.push((
                    rank,
                    Hypothesis {
                        selected,
                        steps,
                        prefix: h.prefix * p,
                        score: h.prefix * e.joint,
                    },
                ));
            }
        }
        children.sort_by(|(ra, a), (rb, b)| rank_children(*ra, a, *rb, b));
        children.truncate(cfg.k_beam);
        beam = children.into_iter().map(|(_, h)| h).collect();
    }
    let best = beam.first().expect("beam is nonempty");
    Ok(scorer.record(image, &best.steps))
}

fn rank_children(ra: usize, a: &Hypothesis, rb: usize, b: &Hypothesis) -> Ordering {
    let (la, lb) = (a.steps.last().unwrap(), b.steps.last().unwrap());
    b.score
        .total_cmp(&a.score)
        .then(lb.joint.total_cmp(&la.joint))
        .then(ra.cmp(&rb))
        .then(la.rationale.cmp(&lb.rationale))
}

/// Runs greedy for width 1 and beam search otherwise.
pub fn find_rationales(
    image: &str,
    x: &[f64],
    rationales: &EmbeddingTable,
    categories: &EmbeddingTable,
    cfg: &SearchConfig,
) -> Result<PredictionRecord> {
    if cfg.k_beam == 1 {
        find_rationales_greedy(image, x, rationales, categories, cfg)
    } else {
        find_rationales_beam(image, x, rationales, categories, cfg)
    }
}

/// `n choose k` in 128-bit arithmetic.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Brute-force maximiser of the search objective.
///
/// Static mode scores every `M`-subset as the product of full-set priors
/// times the best CCI category probability. Renormalized mode scores every
/// ordered `M`-sequence with the step-wise renormalised priors. Refuses
/// instances with more than [`ORACLE_LIMIT`] subsets.
pub fn oracle_exhaustive(
    image: &str,
    x: &[f64],
    rationales: &EmbeddingTable,
    categories: &EmbeddingTable,
    cfg: &SearchConfig,
) -> Result<PredictionRecord> {
    let subsets = binomial(rationales.len(), cfg.m);
    if subsets > ORACLE_LIMIT {
        return Err(Error::InstanceTooLarge {
            candidates: subsets,
            limit: ORACLE_LIMIT,
        });
    }
    let scorer = Scorer::new(x, rationales, categories, cfg)?;
    let n = rationales.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut consider = |seq: &[usize]| -> Result<()> {
        let score = sequence_score(&scorer, seq)?;
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, seq.to_vec()));
        }
        Ok(())
    };
    match cfg.scoring {
        ScoringMode::Static => for_each_combination(n, cfg.m, &mut consider)?,
        ScoringMode::Renormalized => for_each_permutation(n, cfg.m, &mut consider)?,
    }
    let (_, seq) = best.expect("at least one candidate sequence");
    let steps = scorer.trace(&seq)?;
    Ok(scorer.record(image, &steps))
}

/// Objective value of a complete sequence, computed directly.
fn sequence_score(scorer: &Scorer<'_>, seq: &[usize]) -> Result<f64> {
    let mut prior = 1.0;
    for (i, &r) in seq.iter().enumerate() {
        let p = match &scorer.full_probs {
            Some(full) => full[r],
            None => {
                let prefix = &seq[..i];
                let remaining: Vec<usize> = (0..scorer.rationales.len())
                    .filter(|j| !prefix.contains(j))
                    .collect();
                let logits: Vec<f64> = remaining.iter().map(|&j| scorer.logits[j]).collect();
                let probs = softmax(&logits, scorer.cfg.tau)?;
                probs[remaining.iter().position(|&j| j == r).unwrap()]
            }
        };
        prior *= p;
    }
    let conds: Vec<&[f64]> = seq.iter().map(|&i| scorer.rationales.row(i)).collect();
    let probs = cci_probs(scorer.x, &conds, scorer.categories, scorer.cfg.tau)?;
    let best = probs[argmax(&probs).expect("categories nonempty")];
    Ok(prior * best)
}

fn for_each_combination(
    n: usize,
    k: usize,
    f: &mut impl FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    fn rec(
        start: usize,
        n: usize,
        k: usize,
        cur: &mut Vec<usize>,
        f: &mut impl FnMut(&[usize]) -> Result<()>,
    ) -> Result<()> {
        if cur.len() == k {
            return f(cur);
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, f)?;
            cur.pop();
        }
        Ok(())
    }
    rec(0, n, k, &mut Vec::with_capacity(k), f)
}

fn for_each_permutation(
    n: usize,
    k: usize,
    f: &mut impl FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    fn rec(
        n: usize,
        k: usize,
        cur: &mut Vec<usize>,
        f: &mut impl FnMut(&[usize]) -> Result<()>,
    ) -> Result<()> {
        if cur.len() == k {
            return f(cur);
        }
        for i in 0..n {
            if !cur.contains(&i) {
                cur.push(i);
                rec(n, k, cur, f)?;
                cur.pop();
            }
        }
        Ok(())
    }
    rec(n, k, &mut Vec::with_capacity(k), f)
}
