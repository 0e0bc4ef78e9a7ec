//! Reference implementations and generators shared by the integration suites.
//!
//! Nothing here calls into the library's numeric code: the oracles solve the
//! normal equations by Gaussian elimination and compose softmax by hand.

#![allow(dead_code)]

use cci_core::EmbeddingTable;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn unit_of(v: &[f64]) -> Vec<f64> {
    let n = dot(v, v).sqrt();
    v.iter().map(|x| x / n).collect()
}

/// A uniformly random point on the unit sphere.
pub fn random_unit(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    unit_of(&v)
}

pub fn table(prefix: &str, rows: &[Vec<f64>]) -> EmbeddingTable {
    let d = rows[0].len();
    EmbeddingTable::from_rows(
        d,
        rows.iter()
            .enumerate()
            .map(|(i, r)| (format!("{prefix}{i}"), r.clone())),
    )
    .unwrap()
}

/// Least squares through `(S^T S) z = S^T c`, Gaussian elimination with
/// partial pivoting. Assumes full column rank.
pub fn normal_equations(columns: &[Vec<f64>], c: &[f64]) -> Vec<f64> {
    let k = columns.len();
    let mut a: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut row: Vec<f64> = (0..k).map(|j| dot(&columns[i], &columns[j])).collect();
            row.push(dot(&columns[i], c));
            row
        })
        .collect();
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for row in rest {
            let f = row[col] / pivot_row[col];
            for (v, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *v -= f * p;
            }
        }
    }
    let mut z = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| a[i][j] * z[j]).sum();
        z[i] = (a[i][k] - s) / a[i][i];
    }
    z
}

/// Projection of `c` onto span(columns).
pub fn project_oracle(columns: &[Vec<f64>], c: &[f64]) -> Vec<f64> {
    let z = normal_equations(columns, c);
    let mut out = vec![0.0; c.len()];
    for (col, w) in columns.iter().zip(&z) {
        for (o, v) in out.iter_mut().zip(col) {
            *o += w * v;
        }
    }
    out
}

/// CCI logit `proj(c) . normalize(x + sum r)`.
pub fn cci_logit_oracle(x: &[f64], rs: &[Vec<f64>], c: &[f64]) -> f64 {
    let mut columns = vec![x.to_vec()];
    columns.extend(rs.iter().cloned());
    let mut sum = x.to_vec();
    for r in rs {
        for (s, v) in sum.iter_mut().zip(r) {
            *s += v;
        }
    }
    dot(&project_oracle(&columns, c), &unit_of(&sum))
}

pub fn softmax_oracle(logits: &[f64], tau: f64) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (tau * (l - m)).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn add_noise(rng: &mut impl Rng, v: &[f64], sigma: f64) -> Vec<f64> {
    let noisy: Vec<f64> = v
        .iter()
        .map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    unit_of(&noisy)
}

/// A tiny search instance whose image is generated by a known rationale
/// pair and category.
pub struct Planted {
    pub x: Vec<f64>,
    pub rationales: EmbeddingTable,
    pub categories: EmbeddingTable,
    pub planted: [usize; 2],
    pub category: usize,
}

/// `d = 32`, six rationales, five categories, two planted rationales.
pub fn planted_instance(seed: u64) -> Planted {
    let mut g = rng(seed);
    let d = 32;
    let rs: Vec<Vec<f64>> = (0..6).map(|_| random_unit(&mut g, d)).collect();
    let cs: Vec<Vec<f64>> = (0..5).map(|_| random_unit(&mut g, d)).collect();
    let a = g.random_range(0..6);
    let b = (a + g.random_range(1..6)) % 6;
    let category = g.random_range(0..5);
    let sum: Vec<f64> = (0..d)
        .map(|i| rs[a][i] + rs[b][i] + cs[category][i])
        .collect();
    let x = add_noise(&mut g, &unit_of(&sum), 0.05);
    Planted {
        x,
        rationales: table("r", &rs),
        categories: table("c", &cs),
        planted: [a, b],
        category,
    }
}
