//! Bayes-consistency of a conditioning method.
//!
//! For a ground-truth triplet `(x, c, r)` the ratio
//!
//! ```text
//! RT = P(c|x) P(r|c,x) / (P(r|x) P(c|r,x))
//! ```
//!
//! equals 1 when the two conditionals are consistent with the vanilla
//! marginals. `P(c|x)` and `P(r|x)` always come from vanilla inference; the
//! conditionals come from CCI (subspaces `S(x, r)` and `S(x, c)`) or from the
//! "because" prompt grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datastore::{Dataset, Manifest};
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::inference::{
    because_condition, cci_probs, vanilla_probs, Fixed, Method, PromptConditionTable,
};
use crate::numkit::Temperature;
use crate::parallel::{try_map, Workers};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtRecord {
    pub image: String,
    pub category: String,
    pub rationale: String,
    pub p_c_given_x: f64,
    pub p_r_given_cx: f64,
    pub p_r_given_x: f64,
    pub p_c_given_rx: f64,
    pub rt: f64,
}

pub fn rt_ratio(p_c_given_x: f64, p_r_given_cx: f64, p_r_given_x: f64, p_c_given_rx: f64) -> f64 {
    (p_c_given_x * p_r_given_cx) / (p_r_given_x * p_c_given_rx)
}

/// Conditioning backend for the two conditionals.
#[derive(Debug, Clone, Copy)]
pub enum Conditioner<'a> {
    Cci,
    Because(&'a PromptConditionTable),
}

impl Conditioner<'_> {
    pub fn method(&self) -> Method {
        match self {
            Conditioner::Cci => Method::Cci,
            Conditioner::Because(_) => Method::Because,
        }
    }
}

/// RT for one ground-truth triplet.
#[allow(clippy::too_many_arguments)]
pub fn rt_for_triplet(
    image: &str,
    x: &[f64],
    category: &str,
    rationale: &str,
    categories: &EmbeddingTable,
    rationales: &EmbeddingTable,
    tau: Temperature,
    conditioner: Conditioner<'_>,
) -> Result<RtRecord> {
    let ci = categories
        .index_of(category)
        .ok_or_else(|| Error::UnknownId {
            kind: "category",
            id: category.to_string(),
        })?;
    let ri = rationales
        .index_of(rationale)
        .ok_or_else(|| Error::UnknownId {
            kind: "rationale",
            id: rationale.to_string(),
        })?;

    let p_c_given_x = vanilla_probs(x, categories, tau)?[ci];
    let p_r_given_x = vanilla_probs(x, rationales, tau)?[ri];

    let (p_c_given_rx, p_r_given_cx) = match conditioner {
        Conditioner::Cci => {
            let c_side = cci_probs(x, &[rationales.row(ri)], categories, tau)?;
            let r_side = cci_probs(x, &[categories.row(ci)], rationales, tau)?;
            (c_side[ci], r_side[ri])
        }
        Conditioner::Because(grid) => {
            let c_side = because_condition(x, Fixed::Rationale(rationale), grid, tau)?;
            let r_side = because_condition(x, Fixed::Category(category), grid, tau)?;
            let missing = || Error::MissingPromptEmbedding {
                category: category.to_string(),
                rationale: rationale.to_string(),
            };
            (
                c_side.prob(category).ok_or_else(missing)?,
                r_side.prob(rationale).ok_or_else(missing)?,
            )
        }
    };

    Ok(RtRecord {
        image: image.to_string(),
        category: category.to_string(),
        rationale: rationale.to_string(),
        p_c_given_x,
        p_r_given_cx,
        p_r_given_x,
        p_c_given_rx,
        rt: rt_ratio(p_c_given_x, p_r_given_cx, p_r_given_x, p_c_given_rx),
    })
}

/// Which ground-truth rationale feeds the triplet when an image has several.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RationalePick {
    First,
    /// Uniform draw per image from a ChaCha8 stream with this seed.
    Seeded(u64),
}

/// `(image, category, rationale)` triplets, one per manifest record.
pub fn pick_triplets(manifest: &Manifest, pick: RationalePick) -> Vec<(String, String, String)> {
    let mut rng = match pick {
        RationalePick::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        RationalePick::First => None,
    };
    manifest
        .samples()
        .iter()
        .map(|s| {
            let k = rng
                .as_mut()
                .map_or(0, |r| r.random_range(0..s.rationales.len()));
            (s.image.clone(), s.category.clone(), s.rationales[k].clone())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtCell {
    pub tau: f64,
    pub method: Method,
    pub mean: f64,
    pub median: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtRow {
    pub tau: f64,
    pub method: Method,
    #[serde(flatten)]
    pub record: RtRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtSummary {
    pub cells: Vec<RtCell>,
    pub records: Vec<RtRow>,
}

impl RtSummary {
    pub fn cell(&self, tau: f64, method: Method) -> Option<&RtCell> {
        self.cells
            .iter()
            .find(|c| c.tau == tau && c.method == method)
    }

    /// Tab-separated table, one row per `(tau, method)`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("tau\tmethod\tmean_rt\tmedian_rt\tcount\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{}\t{}\t{:.6}\t{:.6}\t{}\n",
                c.tau, c.method, c.mean, c.median, c.count
            ));
        }
        out
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Mean and median RT per `(tau, method)` over one triplet per image.
pub fn rt_summary(
    dataset: &Dataset,
    manifest: &Manifest,
    taus: &[Temperature],
    methods: &[Method],
    pick: RationalePick,
    workers: Workers,
) -> Result<RtSummary> {
    if taus.is_empty() || methods.is_empty() {
        return Err(Error::EmptyInput);
    }
    if manifest.is_empty() {
        return Err(Error::EmptyInput);
    }
    dataset.check_manifest(manifest)?;
    let grid = if methods.contains(&Method::Because) {
        Some(dataset.prompt_grid()?.ok_or_else(|| {
            Error::InvalidConfig("because conditioning needs a prompt-pair store".into())
        })?)
    } else {
        None
    };
    let triplets = pick_triplets(manifest, pick);

    let mut cells = Vec::new();
    let mut records = Vec::new();
    for &tau in taus {
        for &method in methods {
            let conditioner = match method {
                Method::Cci => Conditioner::Cci,
                Method::Because => Conditioner::Because(grid.as_ref().expect("grid loaded")),
            };
            let recs = try_map(&triplets, workers, |(image, c, r)| {
                let x = dataset.images.get(image).expect("manifest checked");
                rt_for_triplet(
                    image,
                    x,
                    c,
                    r,
                    &dataset.categories,
                    &dataset.rationales,
                    tau,
                    conditioner,
                )
            })?;
            let values: Vec<f64> = recs.iter().map(|r| r.rt).collect();
            cells.push(RtCell {
                tau: tau.get(),
                method,
                mean: values.iter().sum::<f64>() / values.len() as f64,
                median: median(&values),
                count: values.len(),
            });
            records.extend(recs.into_iter().map(|record| RtRow {
                tau: tau.get(),
                method,
                record,
            }));
        }
    }
    Ok(RtSummary { cells, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::pair_name;

    #[test]
    fn consistent_tables_give_one() {
        assert_eq!(rt_ratio(0.5, 0.2, 0.25, 0.4), 1.0);
    }

    #[test]
    fn singletons_give_exactly_one() {
        let cats = EmbeddingTable::from_rows(3, [("c", [0.0, 1.0, 0.0])]).unwrap();
        let rats = EmbeddingTable::from_rows(3, [("r", [0.0, 0.0, 1.0])]).unwrap();
        let pairs = EmbeddingTable::from_rows(3, [(pair_name("c", "r"), [0.6, 0.8, 0.0])]).unwrap();
        let grid = PromptConditionTable::from_pairs(&pairs, cats.names(), rats.names()).unwrap();
        let x = [0.6, 0.0, 0.8];
        let tau = Temperature::new(0.5).unwrap();
        for cond in [Conditioner::Cci, Conditioner::Because(&grid)] {
            let rec = rt_for_triplet("i", &x, "c", "r", &cats, &rats, tau, cond).unwrap();
            assert_eq!(rec.rt, 1.0);
            assert_eq!(rec.p_c_given_x, 1.0);
        }
    }

    #[test]
    fn unknown_ids() {
        let cats = EmbeddingTable::from_rows(2, [("c", [0.0, 1.0])]).unwrap();
        let rats = EmbeddingTable::from_rows(2, [("r", [1.0, 0.0])]).unwrap();
        let err = rt_for_triplet(
            "i",
            &[1.0, 0.0],
            "nope",
            "r",
            &cats,
            &rats,
            Temperature::default(),
            Conditioner::Cci,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::UnknownId {
                kind: "category",
                ..
            }
        ));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
