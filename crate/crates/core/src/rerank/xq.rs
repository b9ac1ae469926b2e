use crate::error::{Error, Result};
use crate::knn::CandidateList;
use crate::partition::{CategoryDistribution, PopularityPartition};
use crate::scalar::Scalar;

use super::{candidate_groups, normalized_scores, output_len, ranked, Algorithm, RankedList, RerankConfig};

/// Personalized long-tail promotion over two categories, head and
/// long tail (`M ∪ T`).
///
/// Step score: `(1 - λ)·rel(i) + λ·p(c_i|u)·[c_i not yet in the list]`, so a
/// category earns its propensity bonus only until it is covered. `propensity`
/// is `(p(H|u), p(LT|u))`; see [`CategoryDistribution::head_longtail`].
pub fn xq_rerank<T: Scalar>(
    candidates: &CandidateList,
    propensity: &CategoryDistribution<T>,
    part: &PopularityPartition,
    cfg: &RerankConfig<T>,
) -> Result<RankedList> {
    cfg.validate()?;
    if propensity.dim() != 2 {
        return Err(Error::DimensionMismatch {
            left: propensity.dim(),
            right: 2,
        });
    }
    let len = output_len(candidates, cfg.n)?;
    let rel = normalized_scores::<T>(candidates);
    let long_tail: Vec<usize> = candidate_groups(candidates, part)?
        .into_iter()
        .map(|g| usize::from(g.is_long_tail()))
        .collect();
    let keep = T::one() - cfg.lambda;

    let mut covered = [false; 2];
    let mut taken = vec![false; candidates.len()];
    let mut picks = Vec::with_capacity(len);
    for _ in 0..len {
        let mut best: Option<(usize, T)> = None;
        for k in 0..candidates.len() {
            if taken[k] {
                continue;
            }
            let c = long_tail[k];
            let bonus = if covered[c] { T::zero() } else { propensity.get(c) };
            let score = keep * rel[k] + cfg.lambda * bonus;
            let better = match best {
                None => true,
                Some((b, s)) => score > s || (score == s && rel[k] > rel[b]),
            };
            if better {
                best = Some((k, score));
            }
        }
        let (k, _) = best.expect("a remaining candidate");
        taken[k] = true;
        covered[long_tail[k]] = true;
        picks.push(k);
    }
    Ok(ranked(candidates, &picks, cfg.provenance(Algorithm::Xq)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::ItemGroup::{Head as H, Mid as M, Tail as T};
    use crate::rerank::testutil::fixture;

    fn prop(h: f64) -> CategoryDistribution<f64> {
        CategoryDistribution::new(vec![h, 1.0 - h]).unwrap()
    }

    #[test]
    fn lambda_zero_is_top_n() {
        let (c, part) = fixture(&[0.9, 0.8, 0.7, 0.6], &[H, M, H, T]);
        let out = xq_rerank(&c, &prop(0.2), &part, &RerankConfig::with_lambda(0.0, 3)).unwrap();
        assert_eq!(out.items, c.top(3));
    }

    #[test]
    fn long_tail_user_covers_long_tail_first() {
        let (c, part) = fixture(&[1.0; 4], &[H, H, M, T]);
        let out = xq_rerank(&c, &prop(0.0), &part, &RerankConfig::with_lambda(1.0, 2)).unwrap();
        // first pick: the earliest long-tail item; then every bonus is zero
        // and the earliest remaining candidate wins
        assert_eq!(out.items, ["c02", "c00"]);
    }

    #[test]
    fn single_item_takes_highest_step_score() {
        let (c, part) = fixture(&[0.9, 0.1, 0.0], &[H, M, T]);
        let out = xq_rerank(&c, &prop(0.1), &part, &RerankConfig::with_lambda(0.5, 1)).unwrap();
        // c00: 0.5·1 + 0.5·0.1 = 0.55; c01: 0.5·0.111 + 0.5·0.9 ≈ 0.506
        assert_eq!(out.items, ["c00"]);
    }

    #[test]
    fn rejects_three_category_propensity() {
        let (c, part) = fixture(&[1.0], &[H]);
        let p = CategoryDistribution::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(xq_rerank(&c, &p, &part, &RerankConfig::with_lambda(0.5, 1)).is_err());
    }
}
