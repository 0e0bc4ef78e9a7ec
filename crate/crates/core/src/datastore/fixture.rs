//! Seeded synthetic datasets with planted structure.
//!
//! Rationales are uniform on the sphere. Rationale `j` belongs to category
//! `j mod n_categories`; each category embedding is the noisy mean of its
//! rationales. An image picks a category, draws its ground-truth rationales
//! from that category's pool (topping up from the other rationales when the
//! pool is small) and embeds as the noisy sum of those rationales and the
//! category. Prompt-pair embeddings are the noisy sum `c + r`.
//!
//! Randomness comes from ChaCha8 seeded with the fixture seed, so outputs are
//! identical across runs and platforms.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::manifest::{Manifest, Sample};
use super::store::{EmbeddingStore, Role};
use crate::error::{Error, Result};
use crate::inference::pair_name;
use crate::numkit::{norm, ZERO_EPS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureParams {
    pub seed: u64,
    pub dim: usize,
    pub n_categories: usize,
    pub n_rationales: usize,
    pub n_images: usize,
    pub rationales_per_image: usize,
    /// Per-coordinate Gaussian noise.
    pub noise: f64,
}

impl Default for FixtureParams {
    fn default() -> Self {
        FixtureParams {
            seed: 0,
            dim: 64,
            n_categories: 10,
            n_rationales: 56,
            n_images: 200,
            rationales_per_image: 3,
            noise: 0.05,
        }
    }
}

impl FixtureParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ParameterOutOfRange(msg));
        if self.dim < 2 {
            return bad(format!("dim must be at least 2, got {}", self.dim));
        }
        if self.n_categories == 0 || self.n_rationales == 0 || self.n_images == 0 {
            return bad("category, rationale and image counts must be positive".into());
        }
        if self.rationales_per_image == 0 {
            return bad("rationales per image must be positive".into());
        }
        if self.rationales_per_image > self.n_rationales.min(self.dim - 1) {
            return bad(format!(
                "rationales per image ({}) exceeds min(n_rationales, dim - 1) = {}",
                self.rationales_per_image,
                self.n_rationales.min(self.dim - 1)
            ));
        }
        if self.n_rationales < self.n_categories {
            return bad("every category needs at least one rationale".into());
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad(format!(
                "noise must be finite and non-negative, got {}",
                self.noise
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub images: EmbeddingStore,
    pub categories: EmbeddingStore,
    pub rationales: EmbeddingStore,
    pub prompts: EmbeddingStore,
    pub manifest: Manifest,
}

pub fn image_name(i: usize) -> String {
    format!("img{i:05}")
}

pub fn category_name(i: usize) -> String {
    format!("cat{i:03}")
}

pub fn rationale_name(i: usize) -> String {
    format!("rat{i:04}")
}

struct Gen {
    rng: ChaCha8Rng,
    noise: Normal<f64>,
    dim: usize,
}

impl Gen {
    fn gaussian(&mut self) -> Vec<f64> {
        (0..self.dim)
            .map(|_| StandardNormal.sample(&mut self.rng))
            .collect()
    }

    fn unit_sphere(&mut self) -> Vec<f64> {
        loop {
            let v = self.gaussian();
            let n = norm(&v);
            if n > ZERO_EPS {
                return v.iter().map(|x| x / n).collect();
            }
        }
    }

    /// `normalize(base + noise)`.
    fn noisy_unit(&mut self, base: &[f64]) -> Vec<f64> {
        loop {
            let v: Vec<f64> = base
                .iter()
                .map(|b| b + self.noise.sample(&mut self.rng))
                .collect();
            let n = norm(&v);
            if n > ZERO_EPS {
                return v.iter().map(|x| x / n).collect();
            }
        }
    }
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|x| *x as f32).collect()
}

pub fn generate_fixture(params: &FixtureParams) -> Result<Fixture> {
    params.validate()?;
    let FixtureParams {
        seed,
        dim,
        n_categories,
        n_rationales,
        n_images,
        rationales_per_image,
        noise,
    } = *params;
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        noise: Normal::new(0.0, noise).map_err(|e| Error::ParameterOutOfRange(e.to_string()))?,
        dim,
    };

    let rationale_vecs: Vec<Vec<f64>> = (0..n_rationales).map(|_| g.unit_sphere()).collect();

    let pools: Vec<Vec<usize>> = (0..n_categories)
        .map(|c| (c..n_rationales).step_by(n_categories).collect())
        .collect();

    let category_vecs: Vec<Vec<f64>> = pools
        .iter()
        .map(|pool| {
            let mut mean = vec![0.0; dim];
            for &j in pool {
                for (m, r) in mean.iter_mut().zip(&rationale_vecs[j]) {
                    *m += r / pool.len() as f64;
                }
            }
            g.noisy_unit(&mean)
        })
        .collect();

    let mut images = EmbeddingStore::new(Role::Image, dim);
    let mut samples = Vec::with_capacity(n_images);
    for i in 0..n_images {
        let c = g.rng.random_range(0..n_categories);
        let pool = &pools[c];
        let from_pool = rationales_per_image.min(pool.len());
        let mut chosen: Vec<usize> = index::sample(&mut g.rng, pool.len(), from_pool)
            .into_iter()
            .map(|k| pool[k])
            .collect();
        if chosen.len() < rationales_per_image {
            let others: Vec<usize> = (0..n_rationales)
                .filter(|j| j % n_categories != c)
                .collect();
            let extra = index::sample(
                &mut g.rng,
                others.len(),
                rationales_per_image - chosen.len(),
            );
            chosen.extend(extra.into_iter().map(|k| others[k]));
        }

        let mut sum = category_vecs[c].clone();
        for &j in &chosen {
            for (s, r) in sum.iter_mut().zip(&rationale_vecs[j]) {
                *s += r;
            }
        }
        let x = g.noisy_unit(&sum);
        let name = image_name(i);
        images.push(name.clone(), &to_f32(&x))?;
        samples.push(Sample {
            image: name,
            category: category_name(c),
            rationales: chosen.into_iter().map(rationale_name).collect(),
        });
    }

    let mut prompts = EmbeddingStore::new(Role::PromptPair, dim);
    for (c, cv) in category_vecs.iter().enumerate() {
        for (r, rv) in rationale_vecs.iter().enumerate() {
            let sum: Vec<f64> = cv.iter().zip(rv).map(|(a, b)| a + b).collect();
            let t = g.noisy_unit(&sum);
            prompts.push(
                pair_name(&category_name(c), &rationale_name(r)),
                &to_f32(&t),
            )?;
        }
    }

    let mut categories = EmbeddingStore::new(Role::Category, dim);
    for (c, v) in category_vecs.iter().enumerate() {
        categories.push(category_name(c), &to_f32(v))?;
    }
    let mut rationales = EmbeddingStore::new(Role::Rationale, dim);
    for (r, v) in rationale_vecs.iter().enumerate() {
        rationales.push(rationale_name(r), &to_f32(v))?;
    }

    Ok(Fixture {
        images,
        categories,
        rationales,
        prompts,
        manifest: Manifest::new(samples)?,
    })
}
