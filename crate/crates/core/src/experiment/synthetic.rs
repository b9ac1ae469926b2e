//! Power-law synthetic rating data with per-user popularity propensity.

use std::collections::HashSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, SupplierMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    pub suppliers: usize,
    /// Item popularity weight of the rank-`k` item (1-based) is `k^-exponent`.
    pub exponent: f64,
    /// Profile lengths are drawn uniformly from this inclusive range.
    pub min_profile: usize,
    pub max_profile: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            users: 500,
            items: 300,
            suppliers: 60,
            exponent: 1.5,
            min_profile: 20,
            max_profile: 25,
            seed: 7,
        }
    }
}

fn power_law(n: usize, exponent: f64) -> Vec<f64> {
    (1..=n).map(|k| (k as f64).powf(-exponent)).collect()
}

/// Item id of popularity rank `k` (0-based); zero-padded so id order equals
/// rank order.
pub fn item_name(k: usize) -> String {
    format!("i{k:05}")
}

/// Popular items are rated higher on average: the rank-`k` item has mean
/// `4.5 - 2k/items`, and each rating adds uniform noise on `[-1.5, 1.5]`
/// before rounding and clamping to 1..=5.
fn rating_for(k: usize, items: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mean = 4.5 - 2.0 * k as f64 / items as f64;
    (mean + rng.gen_range(-1.5..=1.5)).round().clamp(1.0, 5.0)
}

/// [`generate`] with the default profile-length range.
pub fn generate_synthetic(
    users: usize,
    items: usize,
    suppliers: usize,
    exponent: f64,
    seed: u64,
) -> Result<(Dataset, SupplierMap)> {
    generate(&SyntheticSpec {
        users,
        items,
        suppliers,
        exponent,
        seed,
        ..SyntheticSpec::default()
    })
}

/// Generates ratings and a supplier map.
///
/// Every user draws a head propensity `θ ~ U(0, 1)`; each of their profile
/// slots picks an item popularity-proportionally with probability `θ` and
/// uniformly otherwise, without repeats. Ratings follow [`rating_for`].
/// Suppliers own items through a second power law (exponent 1), so popular
/// suppliers own more of the catalog.
pub fn generate(spec: &SyntheticSpec) -> Result<(Dataset, SupplierMap)> {
    if spec.users < 3 || spec.items < 3 || spec.suppliers < 3 {
        return Err(Error::InvalidConfig("synthetic users, items and suppliers must each be at least 3".into()));
    }
    if spec.min_profile == 0 || spec.min_profile > spec.max_profile || spec.max_profile > spec.items {
        return Err(Error::InvalidConfig(format!(
            "profile length range [{}, {}] is invalid for {} items",
            spec.min_profile, spec.max_profile, spec.items
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let popularity = WeightedIndex::new(power_law(spec.items, spec.exponent))
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let supplier_weights =
        WeightedIndex::new(power_law(spec.suppliers, 1.0)).map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let map = SupplierMap::from_pairs(
        (0..spec.items).map(|k| (item_name(k), format!("s{:04}", supplier_weights.sample(&mut rng)))),
    )?;

    let mut triples = Vec::new();
    for u in 0..spec.users {
        let theta: f64 = rng.gen();
        let len = rng.gen_range(spec.min_profile..=spec.max_profile);
        let mut seen = HashSet::with_capacity(len);
        while seen.len() < len {
            let k = if rng.gen_bool(theta) {
                popularity.sample(&mut rng)
            } else {
                rng.gen_range(0..spec.items)
            };
            if seen.insert(k) {
                let rating = rating_for(k, spec.items, &mut rng);
                triples.push((format!("u{u:05}"), item_name(k), rating));
            }
        }
    }
    Ok((Dataset::from_triples(triples)?, map))
}
