//! Numeric kernels shared by the inference and search code.
//!
//! Everything here works on `f64` slices. Embeddings are stored as `f32` on
//! disk but projections and probability ratios are computed in double
//! precision.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms at or below this are treated as zero.
pub const ZERO_EPS: f64 = 1e-12;

/// Relative singular-value cutoff used by the pseudo-inverse.
pub const RANK_RCOND: f64 = 1e-8;

/// Softmax sharpness. Always positive and finite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(tau: f64) -> Result<Self> {
        if tau.is_finite() && tau > 0.0 {
            Ok(Temperature(tau))
        } else {
            Err(Error::InvalidTemperature(tau))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for Temperature {
    /// CLIP's conventional logit scale.
    fn default() -> Self {
        Temperature(100.0)
    }
}

impl TryFrom<f64> for Temperature {
    type Error = Error;

    fn try_from(tau: f64) -> Result<Self> {
        Temperature::new(tau)
    }
}

impl From<Temperature> for f64 {
    fn from(t: Temperature) -> f64 {
        t.0
    }
}

impl std::fmt::Display for Temperature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Scales `v` to unit length.
pub fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::EmptyInput);
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("vector"));
    }
    let n = norm(v);
    if n <= ZERO_EPS {
        return Err(Error::ZeroVector { norm: n });
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Tempered softmax, `exp(tau * l_i) / sum_j exp(tau * l_j)`, evaluated with
/// max-subtraction.
pub fn softmax(logits: &[f64], tau: Temperature) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::EmptyInput);
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    let t = tau.get();
    let max = logits
        .iter()
        .map(|l| t * l)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| (t * l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    Ok(out)
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            Some(b) if *v <= values[b] => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Least-squares solver for a fixed `d x k` system matrix.
///
/// The pseudo-inverse is computed once from an SVD, discarding singular
/// values below `RANK_RCOND * sigma_max`, so duplicated or nearly parallel
/// columns still give the minimum-norm solution.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    matrix: DMatrix<f64>,
    pinv: DMatrix<f64>,
    rank: usize,
}

impl LeastSquares {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let (d, k) = matrix.shape();
        if d == 0 || k == 0 {
            return Err(Error::EmptyInput);
        }
        if k > d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: k,
            });
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("system matrix"));
        }
        let svd = matrix.clone().svd(true, true);
        let sigma_max = svd.singular_values.max();
        let cutoff = RANK_RCOND * sigma_max;
        let rank = svd.singular_values.iter().filter(|s| **s > cutoff).count();
        let pinv = if sigma_max <= 0.0 {
            DMatrix::zeros(k, d)
        } else {
            svd.pseudo_inverse(cutoff)
                .map_err(|_| Error::NonFinite("svd"))?
        };
        Ok(LeastSquares { matrix, pinv, rank })
    }

    /// Builds the system matrix from column vectors.
    pub fn from_columns(columns: &[&[f64]]) -> Result<Self> {
        let first = columns.first().ok_or(Error::EmptyInput)?;
        let d = first.len();
        for col in columns {
            if col.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: col.len(),
                });
            }
        }
        let m = DMatrix::from_fn(d, columns.len(), |i, j| columns[j][i]);
        Self::new(m)
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Coefficients `z` minimising `|S z - c|`.
    pub fn solve(&self, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() != self.rows() {
            return Err(Error::DimensionMismatch {
                expected: self.rows(),
                got: c.len(),
            });
        }
        let z = &self.pinv * DVector::from_column_slice(c);
        Ok(z.iter().copied().collect())
    }

    /// `S z` for a coefficient vector.
    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        let v = &self.matrix * DVector::from_column_slice(z);
        v.iter().copied().collect()
    }
}

/// One-shot least squares: `argmin_z |S z - c|`.
pub fn lstsq(s: &DMatrix<f64>, c: &[f64]) -> Result<Vec<f64>> {
    LeastSquares::new(s.clone())?.solve(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tau(t: f64) -> Temperature {
        Temperature::new(t).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let v = normalize(&[3.0, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        assert_eq!(normalize(&[1.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            normalize(&[0.0, 0.0]),
            Err(Error::ZeroVector { .. })
        ));
        assert!(matches!(
            normalize(&[1e-13, 0.0]),
            Err(Error::ZeroVector { .. })
        ));
    }

    #[test]
    fn temperature_rejects_nonpositive() {
        assert!(Temperature::new(0.0).is_err());
        assert!(Temperature::new(-1.0).is_err());
        assert!(Temperature::new(f64::NAN).is_err());
        assert!(Temperature::new(f64::INFINITY).is_err());
        assert_eq!(Temperature::default().get(), 100.0);
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.0, 0.0, 0.0], tau(1.0)).unwrap();
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&[1.0, 0.0], tau(1.0)).unwrap();
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((p[1] - 1.0 / (e + 1.0)).abs() < 1e-15);
        assert!((p[0] - 0.73106).abs() < 1e-5);
        assert!(matches!(softmax(&[], tau(1.0)), Err(Error::EmptyInput)));
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn softmax_sharp_matches_high_precision() {
        // 50-digit reference values.
        let want = [
            0.999_999_999_999_999_995_751_645_7,
            4.248_354_255_291_588_977e-18,
            8.756_510_762_696_520_301e-27,
        ];
        let p = softmax(&[0.9, 0.1, -0.3], tau(50.0)).unwrap();
        for (got, want) in p.iter().zip(want) {
            assert!(((got - want) / want).abs() < 1e-12, "{got} vs {want}");
        }
        assert!(p[0] > 0.999_999);
    }

    #[test]
    fn argmax_prefers_first() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn lstsq_single_column_is_dot() {
        let x = normalize(&[1.0, 2.0, 2.0]).unwrap();
        let c = [0.3, -0.5, 0.7];
        let s = DMatrix::from_column_slice(3, 1, &x);
        let z = lstsq(&s, &c).unwrap();
        assert!((z[0] - dot(&x, &c)).abs() < 1e-14);
    }

    #[test]
    fn lstsq_duplicate_columns() {
        let x = normalize(&[0.2, -0.4, 0.8, 0.1]).unwrap();
        let ls = LeastSquares::from_columns(&[&x, &x]).unwrap();
        assert_eq!(ls.rank(), 1);
        let z = ls.solve(&x).unwrap();
        assert!((z[0] + z[1] - 1.0).abs() < 1e-8);
        let back = ls.reconstruct(&z);
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn lstsq_dimension_checks() {
        let ls = LeastSquares::from_columns(&[&[1.0, 0.0]]).unwrap();
        assert!(matches!(
            ls.solve(&[1.0, 0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            LeastSquares::from_columns(&[&[1.0, 0.0], &[1.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
        let wide = DMatrix::<f64>::zeros(2, 3);
        assert!(LeastSquares::new(wide).is_err());
    }
}
