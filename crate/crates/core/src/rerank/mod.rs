//! Re-ranking a size-m candidate list into a size-n final list.
//!
//! * [`cp_rerank`]: greedy calibration of the list's H/M/T mix to the
//!   user's profile propensity.
//! * [`xq_rerank`]: propensity-weighted head / long-tail coverage.
//! * [`fs_rerank`]: ranked group fairness with long-tail items protected.
//! * [`dm_rerank`]: global min-cost-flow exposure discrepancy minimization.

mod cp;
mod divergence;
mod dm;
pub mod flow;
mod fs;
mod xq;

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use sha2::{Digest, Sha256};

pub use cp::cp_rerank;
pub use divergence::{js_divergence, js_divergence_slices, kl_divergence};
pub use dm::{discrepancy, dm_rerank, uniform_target, DmOutcome, DM_COST_RESOLUTION};
pub use fs::{binomial_cdf, fs_rerank, minimum_protected_counts};
pub use xq::xq_rerank;

use crate::error::{Error, Result};
use crate::knn::CandidateList;
use crate::partition::{ItemGroup, PopularityPartition};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Plain top-n of the candidate list.
    None,
    Cp,
    Xq,
    Fs,
    Dm,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::None => "base",
            Algorithm::Cp => "cp",
            Algorithm::Xq => "xq",
            Algorithm::Fs => "fs",
            Algorithm::Dm => "dm",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "base" => Ok(Algorithm::None),
            "cp" => Ok(Algorithm::Cp),
            "xq" => Ok(Algorithm::Xq),
            "fs" => Ok(Algorithm::Fs),
            "dm" => Ok(Algorithm::Dm),
            other => Err(Error::InvalidConfig(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// Re-ranking parameters. `lambda` weighs the secondary objective against
/// relevance for CP and XQ; `fs_p` / `fs_alpha` parameterize FS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RerankConfig<T> {
    pub lambda: T,
    pub n: usize,
    pub fs_p: T,
    pub fs_alpha: T,
}

impl<T: Scalar> Default for RerankConfig<T> {
    fn default() -> Self {
        Self {
            lambda: T::zero(),
            n: 10,
            fs_p: T::lit(0.5),
            fs_alpha: T::lit(0.1),
        }
    }
}

impl<T: Scalar> RerankConfig<T> {
    pub fn with_lambda(lambda: T, n: usize) -> Self {
        Self {
            lambda,
            n,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= T::zero() && self.lambda <= T::one()) {
            return Err(Error::InvalidConfig(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if self.n == 0 {
            return Err(Error::InvalidConfig("list size n must be positive".into()));
        }
        Ok(())
    }

    /// `algo/<12 hex chars>` identifying the algorithm and configuration.
    pub fn provenance(&self, algo: Algorithm) -> String {
        let text = format!(
            "{algo};lambda={};n={};p={};alpha={}",
            self.lambda, self.n, self.fs_p, self.fs_alpha
        );
        let digest = Sha256::digest(text.as_bytes());
        let mut out = format!("{algo}/");
        for b in &digest[..6] {
            let _ = write!(out, "{b:02x}");
        }
        out
    }
}

/// Final recommendation list for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub user: String,
    pub items: Vec<String>,
    pub provenance: String,
}

/// Min-max normalized candidate scores; all ones when every score is equal.
pub fn normalized_scores<T: Scalar>(candidates: &CandidateList) -> Vec<T> {
    let lo = candidates.scores().fold(f64::INFINITY, f64::min);
    let hi = candidates.scores().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    candidates
        .scores()
        .map(|s| if range > 0.0 { T::lit((s - lo) / range) } else { T::one() })
        .collect()
}

pub(crate) fn candidate_groups(candidates: &CandidateList, part: &PopularityPartition) -> Result<Vec<ItemGroup>> {
    candidates
        .items()
        .map(|i| part.group(i).ok_or_else(|| Error::UnassignedItem(i.to_string())))
        .collect()
}

pub(crate) fn output_len(candidates: &CandidateList, n: usize) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::EmptyList);
    }
    if n > candidates.len() {
        log::warn!(
            "user {}: n = {n} exceeds {} candidates; returning all",
            candidates.user,
            candidates.len()
        );
    }
    Ok(n.min(candidates.len()))
}

pub(crate) fn ranked(candidates: &CandidateList, picks: &[usize], provenance: String) -> RankedList {
    RankedList {
        user: candidates.user.clone(),
        items: picks.iter().map(|&k| candidates.entries[k].0.clone()).collect(),
        provenance,
    }
}

/// Top-n by base score.
pub fn top_n<T: Scalar>(candidates: &CandidateList, cfg: &RerankConfig<T>) -> Result<RankedList> {
    let len = output_len(candidates, cfg.n)?;
    Ok(RankedList {
        user: candidates.user.clone(),
        items: candidates.top(len),
        provenance: cfg.provenance(Algorithm::None),
    })
}

/// Writes `user<TAB>item<TAB>rank` rows, rank starting at 1.
pub fn write_lists<W: Write>(lists: &[RankedList], mut out: W) -> Result<()> {
    for l in lists {
        for (rank, item) in l.items.iter().enumerate() {
            writeln!(out, "{}\t{item}\t{}", l.user, rank + 1)?;
        }
    }
    Ok(())
}

/// Reads list rows, ordering each user's items by rank.
pub fn read_lists<R: Read>(reader: R) -> Result<Vec<RankedList>> {
    let mut by_user: std::collections::BTreeMap<String, Vec<(usize, String)>> = Default::default();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(Error::Parse {
                line: n + 1,
                message: format!("expected 3 fields, found {}", f.len()),
            });
        }
        let rank: usize = f[2].parse().map_err(|_| Error::Parse {
            line: n + 1,
            message: format!("invalid rank '{}'", f[2]),
        })?;
        by_user.entry(f[0].to_string()).or_default().push((rank, f[1].to_string()));
    }
    Ok(by_user
        .into_iter()
        .map(|(user, mut rows)| {
            rows.sort_by_key(|r| r.0);
            RankedList {
                user,
                items: rows.into_iter().map(|(_, i)| i).collect(),
                provenance: String::new(),
            }
        })
        .collect())
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_spans_unit_interval() {
        let c = CandidateList {
            user: "u".into(),
            entries: vec![("a".into(), 4.0), ("b".into(), 3.0), ("c".into(), 2.0)],
        };
        assert_eq!(normalized_scores::<f64>(&c), vec![1.0, 0.5, 0.0]);
        let flat = CandidateList {
            user: "u".into(),
            entries: vec![("a".into(), 2.0), ("b".into(), 2.0)],
        };
        assert_eq!(normalized_scores::<f32>(&flat), vec![1.0, 1.0]);
    }

    #[test]
    fn config_validation_and_provenance() {
        assert!(RerankConfig::with_lambda(1.5f64, 10).validate().is_err());
        assert!(RerankConfig::with_lambda(0.5f64, 0).validate().is_err());
        let a = RerankConfig::with_lambda(0.5f64, 10);
        assert_eq!(a.provenance(Algorithm::Cp), a.provenance(Algorithm::Cp));
        assert_ne!(a.provenance(Algorithm::Cp), RerankConfig::with_lambda(0.4f64, 10).provenance(Algorithm::Cp));
        assert!(a.provenance(Algorithm::Xq).starts_with("xq/"));
    }

    #[test]
    fn list_rows_round_trip() {
        let lists = vec![RankedList {
            user: "u".into(),
            items: vec!["b".into(), "a".into()],
            provenance: String::new(),
        }];
        let mut buf = Vec::new();
        write_lists(&lists, &mut buf).unwrap();
        assert_eq!(read_lists(&buf[..]).unwrap(), lists);
    }
}
