use log::warn;

use crate::error::{Error, Result};
use crate::knn::CandidateList;
use crate::partition::PopularityPartition;
use crate::scalar::Scalar;

use super::{candidate_groups, output_len, ranked, Algorithm, RankedList, RerankConfig};

/// `P(X <= t)` for `X ~ Binomial(trials, p)`, summed in log space.
pub fn binomial_cdf<T: Scalar>(t: usize, trials: usize, p: T) -> T {
    if t >= trials {
        return T::one();
    }
    if p <= T::zero() {
        return T::one();
    }
    if p >= T::one() {
        return T::zero();
    }
    let (lp, lq) = (p.ln(), (T::one() - p).ln());
    let mut log_choose = T::zero();
    let mut total = T::zero();
    for k in 0..=t {
        if k > 0 {
            log_choose = log_choose + T::from_count(trials - k + 1).ln() - T::from_count(k).ln();
        }
        total = total + (log_choose + T::from_count(k) * lp + T::from_count(trials - k) * lq).exp();
    }
    total.min(T::one())
}

/// Minimum number of protected items required in each prefix `1..=n`:
/// entry `j - 1` is the smallest `t` with `P(X <= t) > α`,
/// `X ~ Binomial(j, p)`. A prefix holding fewer protected items would be
/// rejected by a one-sided binomial test at level α.
pub fn minimum_protected_counts<T: Scalar>(n: usize, p: T, alpha: T) -> Vec<usize> {
    (1..=n)
        .map(|j| (0..=j).find(|&t| binomial_cdf(t, j, p) > alpha).unwrap_or(j))
        .collect()
}

/// Ranked group fairness re-ranking with long-tail (`M ∪ T`) items protected.
///
/// The protected and unprotected queues, each in candidate order, are merged
/// by score; whenever the next prefix would hold fewer protected items than
/// [`minimum_protected_counts`] demands, the best remaining protected item is
/// forced in. With too few protected candidates, unprotected items fill the
/// remaining positions.
pub fn fs_rerank<T: Scalar>(
    candidates: &CandidateList,
    part: &PopularityPartition,
    cfg: &RerankConfig<T>,
) -> Result<RankedList> {
    cfg.validate()?;
    if !(cfg.fs_p >= T::lit(0.02) && cfg.fs_p <= T::lit(0.98)) {
        return Err(Error::InvalidConfig(format!("fs_p must lie in [0.02, 0.98], got {}", cfg.fs_p)));
    }
    if !(cfg.fs_alpha >= T::lit(0.01) && cfg.fs_alpha <= T::lit(0.15)) {
        return Err(Error::InvalidConfig(format!(
            "fs_alpha must lie in [0.01, 0.15], got {}",
            cfg.fs_alpha
        )));
    }
    let len = output_len(candidates, cfg.n)?;
    let groups = candidate_groups(candidates, part)?;
    let table = minimum_protected_counts(len, cfg.fs_p, cfg.fs_alpha);

    let protected: Vec<usize> = (0..groups.len()).filter(|&k| groups[k].is_long_tail()).collect();
    let unprotected: Vec<usize> = (0..groups.len()).filter(|&k| !groups[k].is_long_tail()).collect();
    let (mut pi, mut ui) = (0, 0);
    let mut picks = Vec::with_capacity(len);
    let mut shortfall = false;
    for need in table {
        let have = pi;
        let take_protected = if pi < protected.len() && have < need {
            true
        } else if pi < protected.len() && ui < unprotected.len() {
            // Both queues are in candidate order, so the lower position is
            // the higher score.
            protected[pi] < unprotected[ui]
        } else {
            if have < need {
                shortfall = true;
            }
            pi < protected.len()
        };
        if take_protected {
            picks.push(protected[pi]);
            pi += 1;
        } else {
            picks.push(unprotected[ui]);
            ui += 1;
        }
    }
    if shortfall {
        warn!(
            "user {}: only {} protected candidates, fewer than required",
            candidates.user,
            protected.len()
        );
    }
    Ok(ranked(candidates, &picks, cfg.provenance(Algorithm::Fs)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::ItemGroup::{Head as H, Mid as M, Tail as T};
    use crate::rerank::testutil::fixture;

    fn cfg(p: f64, alpha: f64, n: usize) -> RerankConfig<f64> {
        RerankConfig {
            lambda: 0.0,
            n,
            fs_p: p,
            fs_alpha: alpha,
        }
    }

    #[test]
    fn cdf_matches_hand_values() {
        // Binomial(10, 0.5): P(X <= 2) = 56 / 1024, P(X <= 3) = 176 / 1024
        assert!((binomial_cdf(2, 10, 0.5f64) - 56.0 / 1024.0).abs() < 1e-12);
        assert!((binomial_cdf(3, 10, 0.5f64) - 176.0 / 1024.0).abs() < 1e-12);
        assert_eq!(binomial_cdf(10, 10, 0.5), 1.0);
    }

    #[test]
    fn table_for_half_and_ten_percent() {
        let t = minimum_protected_counts(10, 0.5, 0.1);
        assert_eq!(t[9], 3);
        assert_eq!(t[0], 0);
        assert!(t.windows(2).all(|w| w[1] >= w[0] && w[1] - w[0] <= 1));
    }

    #[test]
    fn small_p_is_unconstrained_top_n() {
        assert!(minimum_protected_counts(10, 0.02, 0.1).iter().all(|&t| t == 0));
        let (c, part) = fixture(&[0.9, 0.8, 0.7, 0.6, 0.5, 0.4], &[H, H, H, M, T, H]);
        let out = fs_rerank(&c, &part, &cfg(0.02, 0.1, 4)).unwrap();
        assert_eq!(out.items, c.top(4));
    }

    #[test]
    fn all_protected_is_top_n() {
        let (c, part) = fixture(&[0.9, 0.8, 0.7, 0.6], &[M, T, M, T]);
        let out = fs_rerank(&c, &part, &cfg(0.95, 0.05, 3)).unwrap();
        assert_eq!(out.items, c.top(3));
    }

    #[test]
    fn forces_protected_items_into_prefixes() {
        let groups = [H, H, H, H, H, H, M, T, M, T, M, T];
        let scores: Vec<f64> = (0..12).map(|k| 1.0 - k as f64 * 0.05).collect();
        let (c, part) = fixture(&scores, &groups);
        let out = fs_rerank(&c, &part, &cfg(0.75, 0.1, 10)).unwrap();
        let table = minimum_protected_counts(10, 0.75, 0.1);
        let mut prot = 0;
        for (j, item) in out.items.iter().enumerate() {
            prot += usize::from(part.group(item).unwrap().is_long_tail());
            assert!(prot >= table[j], "prefix {}", j + 1);
        }
    }

    #[test]
    fn shortfall_fills_with_unprotected() {
        let (c, part) = fixture(&[0.9, 0.8, 0.7, 0.6], &[H, H, H, M]);
        let out = fs_rerank(&c, &part, &cfg(0.95, 0.15, 4)).unwrap();
        assert_eq!(out.items[0], "c03");
        assert_eq!(out.items.len(), 4);
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        let (c, part) = fixture(&[0.9], &[H]);
        assert!(fs_rerank(&c, &part, &cfg(0.99, 0.1, 1)).is_err());
        assert!(fs_rerank(&c, &part, &cfg(0.5, 0.2, 1)).is_err());
    }
}
