use crate::error::Result;
use crate::knn::CandidateList;
use crate::partition::{CategoryDistribution, GroupLabel, PopularityPartition};
use crate::scalar::Scalar;

use super::divergence::js_divergence_slices;
use super::{candidate_groups, normalized_scores, output_len, ranked, Algorithm, RankedList, RerankConfig};

/// Calibrated-popularity re-ranking.
///
/// Builds the list greedily: at every step each remaining candidate `i` is
/// scored by `(1 - λ)·Rel(ℓ ∪ {i}) - λ·JS(P_u, Q(ℓ ∪ {i}))`, where `Rel` sums
/// min-max normalized candidate scores and `Q` is the H/M/T mix of the
/// list. Ties go to the higher normalized score, then to the earlier
/// candidate.
pub fn cp_rerank<T: Scalar>(
    candidates: &CandidateList,
    profile: &CategoryDistribution<T>,
    part: &PopularityPartition,
    cfg: &RerankConfig<T>,
) -> Result<RankedList> {
    cfg.validate()?;
    let len = output_len(candidates, cfg.n)?;
    let rel = normalized_scores::<T>(candidates);
    let groups: Vec<usize> = candidate_groups(candidates, part)?
        .into_iter()
        .map(|g| g.index())
        .collect();
    let p = profile.probs();
    let lambda = cfg.lambda;
    let keep = T::one() - lambda;

    let mut taken = vec![false; candidates.len()];
    let mut picks = Vec::with_capacity(len);
    let mut counts = [0usize; 3];
    let mut rel_sum = T::zero();
    let mut q = [T::zero(); 3];

    for step in 0..len {
        let size = T::from_count(step + 1);
        let mut best: Option<(usize, T, T)> = None;
        for k in 0..candidates.len() {
            if taken[k] {
                continue;
            }
            counts[groups[k]] += 1;
            for c in 0..3 {
                q[c] = T::from_count(counts[c]) / size;
            }
            counts[groups[k]] -= 1;
            let js = js_divergence_slices(p, &q)?;
            let objective = keep * (rel_sum + rel[k]) - lambda * js;
            let better = match best {
                None => true,
                Some((_, obj, r)) => objective > obj || (objective == obj && rel[k] > r),
            };
            if better {
                best = Some((k, objective, rel[k]));
            }
        }
        let (k, _, r) = best.expect("a remaining candidate");
        taken[k] = true;
        counts[groups[k]] += 1;
        rel_sum = rel_sum + r;
        picks.push(k);
    }
    Ok(ranked(candidates, &picks, cfg.provenance(Algorithm::Cp)))
}
