//! Condition subspaces and the desirable direction.
//!
//! A condition set `{x, r_1, .., r_M}` spans a subspace `S`. Categories are
//! scored by projecting them onto `S` and measuring how far the projection
//! reaches along the desirable direction `d = normalize(w_0 x + sum w_i r_i)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{dot, norm, LeastSquares, ZERO_EPS};

/// Coefficients `w_0..w_M` over the conditions `[x, r_1..r_M]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionWeights(Vec<f64>);

impl DirectionWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::EmptyInput);
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weights"));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(Error::ZeroWeights);
        }
        Ok(DirectionWeights(w))
    }

    /// Equal weights over `conditions` vectors.
    pub fn uniform(conditions: usize) -> Self {
        DirectionWeights(vec![1.0; conditions.max(1)])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Replaces every weight `w_j <= 0` by `-w_j`, leaving positive weights alone.
pub fn flip_nonpositive_weights(w: &DirectionWeights) -> DirectionWeights {
    DirectionWeights(
        w.0.iter()
            .map(|v| if *v <= 0.0 { -v } else { *v })
            .collect(),
    )
}

/// `normalize(sum_j w_j v_j)` over the given condition vectors.
pub fn weighted_direction(conditions: &[&[f64]], w: &DirectionWeights) -> Result<Vec<f64>> {
    if conditions.len() != w.len() {
        return Err(Error::WeightCount {
            expected: conditions.len(),
            got: w.len(),
        });
    }
    let d = conditions[0].len();
    let mut sum = vec![0.0; d];
    for (v, wj) in conditions.iter().zip(w.as_slice()) {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: v.len(),
            });
        }
        for (s, vi) in sum.iter_mut().zip(v.iter()) {
            *s += wj * vi;
        }
    }
    let n = norm(&sum);
    if n <= ZERO_EPS {
        return Err(Error::DegenerateDirection { norm: n });
    }
    Ok(sum.iter().map(|s| s / n).collect())
}

/// Smallest pairwise dot product within a set of vectors, `None` for fewer
/// than two vectors.
pub fn min_pairwise_dot(vectors: &[&[f64]]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            let v = dot(vectors[i], vectors[j]);
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

/// The span of an image embedding and its rationale embeddings, with the
/// scoring direction inside it.
#[derive(Debug, Clone)]
pub struct ConditionSubspace {
    solver: LeastSquares,
    desirable_dir: Vec<f64>,
}

/// Component of a category embedding inside the condition subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub parallel: Vec<f64>,
    /// `c_par . d`, i.e. `|c_par| cos(delta)`.
    pub logit: f64,
}

impl ConditionSubspace {
    /// Uniform-weight subspace over `[x, r_1..r_M]`.
    pub fn new(x: &[f64], rationales: &[&[f64]]) -> Result<Self> {
        Self::with_weights(x, rationales, None)
    }

    /// As [`ConditionSubspace::new`], with custom positive weights for the
    /// desirable direction. Weights index the deduplicated condition list.
    pub fn with_weights(
        x: &[f64],
        rationales: &[&[f64]],
        weights: Option<&DirectionWeights>,
    ) -> Result<Self> {
        let d = x.len();
        if d == 0 {
            return Err(Error::EmptyInput);
        }
        let mut columns: Vec<&[f64]> = Vec::with_capacity(rationales.len() + 1);
        columns.push(x);
        for r in rationales {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
            // exact duplicates only
            if !columns[1..].contains(r) {
                columns.push(r);
            }
        }
        if columns.len() > d {
            return Err(Error::TooManyConditions {
                conditions: columns.len() - 1,
                dim: d,
            });
        }
        let uniform;
        let w = match weights {
            Some(w) => {
                if w.as_slice().iter().any(|v| *v <= 0.0) {
                    return Err(Error::InvalidConfig(
                        "desirable-direction weights must be positive".into(),
                    ));
                }
                w
            }
            None => {
                uniform = DirectionWeights::uniform(columns.len());
                &uniform
            }
        };
        let desirable_dir = weighted_direction(&columns, w)?;
        let solver = LeastSquares::from_columns(&columns)?;
        Ok(ConditionSubspace {
            solver,
            desirable_dir,
        })
    }

    pub fn dim(&self) -> usize {
        self.solver.rows()
    }

    /// Number of basis columns, `1 + M` after deduplication.
    pub fn num_conditions(&self) -> usize {
        self.solver.cols()
    }

    pub fn rank(&self) -> usize {
        self.solver.rank()
    }

    pub fn desirable_dir(&self) -> &[f64] {
        &self.desirable_dir
    }

    pub fn basis(&self) -> &nalgebra::DMatrix<f64> {
        self.solver.matrix()
    }

    pub fn project(&self, c: &[f64]) -> Result<Projection> {
        let z = self.solver.solve(c)?;
        let parallel = self.solver.reconstruct(&z);
        let logit = dot(&parallel, &self.desirable_dir);
        Ok(Projection { parallel, logit })
    }

    /// Just the alignment score of `c` along the desirable direction.
    pub fn logit(&self, c: &[f64]) -> Result<f64> {
        self.project(c).map(|p| p.logit)
    }
}

/// Free-function form of [`ConditionSubspace::new`].
pub fn build_subspace(x: &[f64], rationales: &[&[f64]]) -> Result<ConditionSubspace> {
    ConditionSubspace::new(x, rationales)
}

/// Free-function form of [`ConditionSubspace::project`].
pub fn project(sub: &ConditionSubspace, c: &[f64]) -> Result<Projection> {
    sub.project(c)
}
