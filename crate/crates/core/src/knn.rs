//! Item-based collaborative filtering producing scored top-m candidates.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use log::debug;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// How neighbor ratings are combined into a candidate score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// `Σ sim·r / Σ |sim|` over the user's rated neighbors.
    #[default]
    WeightedAverage,
    /// `Σ sim·r`, unnormalized.
    WeightedSum,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted_average" | "average" => Ok(Aggregation::WeightedAverage),
            "weighted_sum" | "sum" => Ok(Aggregation::WeightedSum),
            other => Err(Error::InvalidConfig(format!("unknown aggregation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnParams {
    pub k: usize,
    pub shrinkage: f64,
    pub aggregation: Aggregation,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self {
            k: 40,
            shrinkage: 10.0,
            aggregation: Aggregation::WeightedAverage,
        }
    }
}

/// Shrunk cosine item-item similarities, truncated to the top-k neighbors of
/// every item. Indices refer to the train dataset the model was fit on.
#[derive(Debug, Clone)]
pub struct SimilarityModel {
    params: KnnParams,
    item_ids: Vec<String>,
    /// Per item: (neighbor, similarity), similarity descending.
    neighbors: Vec<Vec<(usize, f64)>>,
    /// Per item j: the items i that keep j among their neighbors.
    neighbor_of: Vec<Vec<(usize, f64)>>,
}

impl SimilarityModel {
    pub fn params(&self) -> KnnParams {
        self.params
    }

    pub fn neighbors(&self, item_idx: usize) -> &[(usize, f64)] {
        &self.neighbors[item_idx]
    }

    /// Stored similarity of `j` as a neighbor of `i`, if retained.
    pub fn similarity(&self, i: &str, j: &str) -> Option<f64> {
        let i = self.item_ids.binary_search_by(|x| x.as_str().cmp(i)).ok()?;
        let j = self.item_ids.binary_search_by(|x| x.as_str().cmp(j)).ok()?;
        self.neighbors[i].iter().find(|(n, _)| *n == j).map(|&(_, s)| s)
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }
}

/// Computes cosine similarity over co-rating user vectors, damped by
/// `n_ij / (n_ij + shrinkage)`, and keeps each item's `k` best neighbors
/// (ties by item id).
pub fn fit(train: &Dataset, params: KnnParams) -> Result<SimilarityModel> {
    if train.num_ratings() == 0 {
        return Err(Error::EmptyDataset);
    }
    if params.k == 0 {
        return Err(Error::InvalidConfig("neighborhood size must be positive".into()));
    }
    if !(params.shrinkage >= 0.0) {
        return Err(Error::InvalidConfig("shrinkage must be non-negative".into()));
    }
    let n_items = train.num_items();
    let norms: Vec<f64> = (0..n_items)
        .map(|i| train.raters(i).iter().map(|(_, r)| r * r).sum::<f64>().sqrt())
        .collect();

    let neighbors: Vec<Vec<(usize, f64)>> = (0..n_items)
        .into_par_iter()
        .map_init(
            || (vec![0.0f64; n_items], vec![0u32; n_items], Vec::<usize>::new()),
            |(dot, co, touched), i| {
                for &(u, ri) in train.raters(i) {
                    for &(j, rj) in train.profile(u) {
                        if j == i {
                            continue;
                        }
                        if co[j] == 0 {
                            touched.push(j);
                        }
                        co[j] += 1;
                        dot[j] += ri * rj;
                    }
                }
                let mut sims: Vec<(usize, f64)> = Vec::with_capacity(touched.len());
                for &j in touched.iter() {
                    let denom = norms[i] * norms[j];
                    if denom > 0.0 {
                        let n = co[j] as f64;
                        let s = dot[j] / denom * n / (n + params.shrinkage);
                        if s != 0.0 {
                            sims.push((j, s));
                        }
                    }
                    dot[j] = 0.0;
                    co[j] = 0;
                }
                touched.clear();
                sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                sims.truncate(params.k);
                sims
            },
        )
        .collect();

    let mut neighbor_of = vec![Vec::new(); n_items];
    for (i, ns) in neighbors.iter().enumerate() {
        for &(j, s) in ns {
            neighbor_of[j].push((i, s));
        }
    }

    Ok(SimilarityModel {
        params,
        item_ids: train.items().to_vec(),
        neighbors,
        neighbor_of,
    })
}

/// Scored candidate items for one user, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateList {
    pub user: String,
    pub entries: Vec<(String, f64)>,
}

impl CandidateList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(i, _)| i.as_str())
    }

    pub fn scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|&(_, s)| s)
    }

    /// The first `n` candidate items.
    pub fn top(&self, n: usize) -> Vec<String> {
        self.entries.iter().take(n).map(|(i, _)| i.clone()).collect()
    }
}

/// Orders (item index, score) by score descending, then train popularity
/// descending, then item id ascending.
fn candidate_order(train: &Dataset) -> impl Fn(&(usize, f64), &(usize, f64)) -> Ordering + '_ {
    move |a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| train.item_count(b.0).cmp(&train.item_count(a.0)))
            .then(a.0.cmp(&b.0))
    }
}

/// Top-`m` unrated items for `user`. Items sharing no neighbor with the
/// user's profile are not scored and never padded in.
pub fn recommend(model: &SimilarityModel, user: &str, train: &Dataset, m: usize) -> Result<CandidateList> {
    let u = train
        .user_idx(user)
        .ok_or_else(|| Error::UnknownUser(user.to_string()))?;
    recommend_idx(model, u, train, m)
}

fn recommend_idx(model: &SimilarityModel, u: usize, train: &Dataset, m: usize) -> Result<CandidateList> {
    if model.num_items() != train.num_items() {
        return Err(Error::InvalidConfig("model was fit on a different dataset".into()));
    }
    let profile = train.profile(u);
    if profile.is_empty() {
        return Err(Error::EmptyProfile(train.user_id(u).to_string()));
    }
    let mut acc: HashMap<usize, (f64, f64)> = HashMap::new();
    for &(j, r) in profile {
        for &(i, s) in &model.neighbor_of[j] {
            let e = acc.entry(i).or_insert((0.0, 0.0));
            e.0 += s * r;
            e.1 += s.abs();
        }
    }
    let mut scored: Vec<(usize, f64)> = acc
        .into_iter()
        .filter(|(i, _)| profile.binary_search_by_key(i, |&(j, _)| j).is_err())
        .filter(|(_, (_, den))| *den > 0.0)
        .map(|(i, (num, den))| {
            let score = match model.params.aggregation {
                Aggregation::WeightedAverage => num / den,
                Aggregation::WeightedSum => num,
            };
            (i, score)
        })
        .collect();
    scored.sort_by(candidate_order(train));
    if scored.len() < m {
        debug!(
            "user {}: only {} scoreable items for m = {m}",
            train.user_id(u),
            scored.len()
        );
    }
    scored.truncate(m);
    Ok(CandidateList {
        user: train.user_id(u).to_string(),
        entries: scored
            .into_iter()
            .map(|(i, s)| (train.item_id(i).to_string(), s))
            .collect(),
    })
}

/// Candidate lists for every train user, in ascending user order.
pub fn recommend_all(model: &SimilarityModel, train: &Dataset, m: usize) -> Result<Vec<CandidateList>> {
    (0..train.num_users())
        .into_par_iter()
        .map(|u| recommend_idx(model, u, train, m))
        .collect()
}

/// Writes `user<TAB>item<TAB>score<TAB>rank` rows, rank starting at 1.
pub fn write_candidates<W: Write>(lists: &[CandidateList], mut out: W) -> Result<()> {
    for list in lists {
        for (rank, (item, score)) in list.entries.iter().enumerate() {
            writeln!(out, "{}\t{item}\t{score}\t{}", list.user, rank + 1)?;
        }
    }
    Ok(())
}

/// Reads candidate rows back, ordering each user's entries by rank.
pub fn read_candidates<R: Read>(reader: R) -> Result<Vec<CandidateList>> {
    let mut by_user: std::collections::BTreeMap<String, Vec<(usize, String, f64)>> = Default::default();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let bad = |message: String| Error::Parse { line: n + 1, message };
        if f.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", f.len())));
        }
        let score: f64 = f[2].parse().map_err(|_| bad(format!("invalid score '{}'", f[2])))?;
        let rank: usize = f[3].parse().map_err(|_| bad(format!("invalid rank '{}'", f[3])))?;
        by_user
            .entry(f[0].to_string())
            .or_default()
            .push((rank, f[1].to_string(), score));
    }
    Ok(by_user
        .into_iter()
        .map(|(user, mut rows)| {
            rows.sort_by_key(|r| r.0);
            CandidateList {
                user,
                entries: rows.into_iter().map(|(_, i, s)| (i, s)).collect(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shrink0(k: usize) -> KnnParams {
        KnnParams {
            k,
            shrinkage: 0.0,
            aggregation: Aggregation::WeightedAverage,
        }
    }

    #[test]
    fn identical_columns_have_unit_similarity() {
        let t = Dataset::from_triples(vec![
            ("u1", "a", 5.0),
            ("u2", "a", 3.0),
            ("u3", "a", 1.0),
            ("u1", "b", 5.0),
            ("u2", "b", 3.0),
            ("u3", "b", 1.0),
            ("u4", "c", 2.0),
        ])
        .unwrap();
        let m = fit(&t, shrink0(10)).unwrap();
        assert!((m.similarity("a", "b").unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(m.similarity("b", "a"), m.similarity("a", "b"));
        assert!(m.similarity("a", "c").is_none());
        assert!(m.similarity("a", "a").is_none());
    }

    #[test]
    fn hand_cosine() {
        let t = Dataset::from_triples(vec![
            ("u1", "i", 5.0),
            ("u2", "i", 3.0),
            ("u1", "j", 3.0),
            ("u2", "j", 5.0),
        ])
        .unwrap();
        let m = fit(&t, shrink0(10)).unwrap();
        assert!((m.similarity("i", "j").unwrap() - 30.0 / 34.0).abs() < 1e-12);

        let damped = fit(&t, KnnParams { shrinkage: 2.0, ..shrink0(10) }).unwrap();
        assert!((damped.similarity("i", "j").unwrap() - 30.0 / 34.0 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn truncates_to_k() {
        let mut t = Vec::new();
        for u in 0..4 {
            for i in 0..6 {
                t.push((format!("u{u}"), format!("i{i}"), 1.0 + ((u + i) % 3) as f64));
            }
        }
        let d = Dataset::from_triples(t).unwrap();
        let m = fit(&d, shrink0(2)).unwrap();
        for i in 0..d.num_items() {
            assert!(m.neighbors(i).len() <= 2);
            assert!(m.neighbors(i).iter().all(|&(j, _)| j != i));
        }
    }

    #[test]
    fn single_neighbor_score_is_the_rating() {
        // i and j co-rated by v and w; u rated only j
        let t = Dataset::from_triples(vec![
            ("u", "j", 5.0),
            ("v", "i", 4.0),
            ("v", "j", 3.0),
            ("w", "i", 1.0),
            ("w", "j", 2.0),
        ])
        .unwrap();
        let m = fit(&t, shrink0(10)).unwrap();
        let c = recommend(&m, "u", &t, 100).unwrap();
        assert_eq!(c.entries, vec![("i".to_string(), 5.0)]);
    }

    #[test]
    fn excludes_profile_items_and_returns_short_lists() {
        let t = Dataset::from_triples(vec![
            ("u1", "a", 5.0),
            ("u1", "b", 4.0),
            ("u2", "a", 4.0),
            ("u2", "c", 2.0),
            ("u3", "b", 3.0),
            ("u3", "c", 5.0),
        ])
        .unwrap();
        let m = fit(&t, KnnParams::default()).unwrap();
        let c = recommend(&m, "u1", &t, 100).unwrap();
        assert_eq!(c.items().collect::<Vec<_>>(), ["c"]);
        assert!(recommend(&m, "ghost", &t, 10).is_err());
    }

    #[test]
    fn candidate_rows_round_trip() {
        let lists = vec![CandidateList {
            user: "u".into(),
            entries: vec![("a".into(), 0.5), ("b".into(), 0.25)],
        }];
        let mut buf = Vec::new();
        write_candidates(&lists, &mut buf).unwrap();
        assert_eq!(read_candidates(&buf[..]).unwrap(), lists);
    }
}
