//! Rating ingestion: parsing, play-count conversion, profile filtering,
//! per-user train/test splitting and supplier metadata.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One row of a rating or play-count log.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub value: f64,
    pub timestamp: Option<i64>,
}

impl Interaction {
    pub fn new(user: impl Into<String>, item: impl Into<String>, value: f64) -> Self {
        Self {
            user: user.into(),
            item: item.into(),
            value,
            timestamp: None,
        }
    }
}

/// How the value column of a rating file is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingFormat {
    /// Explicit ratings, one per (user, item).
    Explicit,
    /// Play counts, possibly repeated per (user, item); converted with
    /// [`frequency_to_ratings`].
    Playcount,
}

impl std::str::FromStr for RatingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit" => Ok(RatingFormat::Explicit),
            "playcount" => Ok(RatingFormat::Playcount),
            other => Err(Error::InvalidConfig(format!("unknown rating format '{other}'"))),
        }
    }
}

/// Interprets the escape sequences a shell user would type for a delimiter.
pub fn parse_delimiter(raw: &str) -> String {
    match raw {
        "\\t" | "tab" => "\t".to_string(),
        other => other.to_string(),
    }
}

/// Immutable user-item rating store.
///
/// Users and items are interned in ascending id order so every index-based
/// iteration is deterministic regardless of input order.
#[derive(Debug, Clone)]
pub struct Dataset {
    users: Vec<String>,
    items: Vec<String>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
    profiles: Vec<Vec<(usize, f64)>>,
    raters: Vec<Vec<(usize, f64)>>,
    num_ratings: usize,
}

impl Dataset {
    /// Builds a dataset from (user, item, rating) triples. Repeated pairs keep
    /// the last value seen.
    pub fn from_triples<I, U, T>(triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (U, T, f64)>,
        U: Into<String>,
        T: Into<String>,
    {
        let mut ratings: BTreeMap<(String, String), f64> = BTreeMap::new();
        let mut duplicates = 0usize;
        for (user, item, value) in triples {
            if ratings.insert((user.into(), item.into()), value).is_some() {
                duplicates += 1;
            }
        }
        if duplicates > 0 {
            warn!("{duplicates} repeated (user, item) pairs collapsed to their last value");
        }
        if ratings.is_empty() {
            return Err(Error::EmptyDataset);
        }

        let mut users: Vec<String> = ratings.keys().map(|(u, _)| u.clone()).collect();
        users.dedup();
        let mut items: Vec<String> = ratings.keys().map(|(_, i)| i.clone()).collect();
        items.sort_unstable();
        items.dedup();

        let user_index: HashMap<String, usize> =
            users.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect();
        let item_index: HashMap<String, usize> =
            items.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();

        let mut profiles = vec![Vec::new(); users.len()];
        let mut raters = vec![Vec::new(); items.len()];
        for ((user, item), value) in &ratings {
            let u = user_index[user];
            let i = item_index[item];
            profiles[u].push((i, *value));
            raters[i].push((u, *value));
        }
        for p in &mut profiles {
            p.sort_unstable_by_key(|&(i, _)| i);
        }

        Ok(Self {
            users,
            items,
            user_index,
            item_index,
            profiles,
            raters,
            num_ratings: ratings.len(),
        })
    }

    pub fn from_interactions(interactions: &[Interaction]) -> Result<Self> {
        if interactions.is_empty() {
            return Err(Error::NoInteractions);
        }
        Self::from_triples(
            interactions
                .iter()
                .map(|x| (x.user.clone(), x.item.clone(), x.value)),
        )
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_ratings(&self) -> usize {
        self.num_ratings
    }

    /// User ids in ascending order.
    pub fn users(&self) -> &[String] {
        &self.users
    }

    /// Item ids in ascending order.
    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn user_id(&self, idx: usize) -> &str {
        &self.users[idx]
    }

    pub fn item_id(&self, idx: usize) -> &str {
        &self.items[idx]
    }

    pub fn user_idx(&self, user: &str) -> Option<usize> {
        self.user_index.get(user).copied()
    }

    pub fn item_idx(&self, item: &str) -> Option<usize> {
        self.item_index.get(item).copied()
    }

    pub fn contains_item(&self, item: &str) -> bool {
        self.item_index.contains_key(item)
    }

    /// Rated items of a user as (item index, rating), ascending by index.
    pub fn profile(&self, user_idx: usize) -> &[(usize, f64)] {
        &self.profiles[user_idx]
    }

    /// Raters of an item as (user index, rating), ascending by index.
    pub fn raters(&self, item_idx: usize) -> &[(usize, f64)] {
        &self.raters[item_idx]
    }

    /// Number of ratings the item received.
    pub fn item_count(&self, item_idx: usize) -> usize {
        self.raters[item_idx].len()
    }

    pub fn rating(&self, user: &str, item: &str) -> Option<f64> {
        let u = self.user_idx(user)?;
        let i = self.item_idx(item)?;
        let p = &self.profiles[u];
        p.binary_search_by_key(&i, |&(j, _)| j).ok().map(|k| p[k].1)
    }

    /// All ratings as (user, item, value), user-major in ascending id order.
    pub fn ratings(&self) -> impl Iterator<Item = (&str, &str, f64)> + '_ {
        self.profiles.iter().enumerate().flat_map(move |(u, p)| {
            p.iter()
                .map(move |&(i, r)| (self.users[u].as_str(), self.items[i].as_str(), r))
        })
    }

    /// Keeps only the ratings for which `keep(user, item)` holds.
    pub fn retain<F>(&self, mut keep: F) -> Result<Self>
    where
        F: FnMut(&str, &str) -> bool,
    {
        Self::from_triples(
            self.ratings()
                .filter(|(u, i, _)| keep(u, i))
                .map(|(u, i, r)| (u.to_string(), i.to_string(), r))
                .collect::<Vec<_>>(),
        )
    }

    /// Writes the canonical tab-separated `user item rating` form.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for (u, i, r) in self.ratings() {
            writeln!(out, "{u}\t{i}\t{r}")?;
        }
        Ok(())
    }

    /// Reads the canonical tab-separated form written by [`Dataset::write_tsv`].
    pub fn read_tsv(path: &Path) -> Result<Self> {
        Self::from_interactions(&load_ratings(path, "\t")?)
    }
}

/// Parses rating rows `user<d>item<d>value[<d>timestamp]`. Blank lines are
/// skipped; rows are returned in file order.
pub fn parse_ratings<R: Read>(reader: R, delimiter: &str) -> Result<Vec<Interaction>> {
    if delimiter.is_empty() {
        return Err(Error::InvalidConfig("empty delimiter".into()));
    }
    let mut out = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let lineno = n + 1;
        let fields: Vec<&str> = line.split(delimiter).collect();
        if fields.len() < 3 || fields.len() > 4 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 3 or 4 fields, found {}", fields.len()),
            });
        }
        let (user, item) = (fields[0].trim(), fields[1].trim());
        if user.is_empty() || item.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                message: "empty user or item id".into(),
            });
        }
        let value: f64 = fields[2].trim().parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("invalid value '{}'", fields[2]),
        })?;
        if !value.is_finite() || value < 0.0 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("value must be finite and non-negative, got {value}"),
            });
        }
        let timestamp = match fields.get(3) {
            Some(t) => Some(t.trim().parse::<i64>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("invalid timestamp '{t}'"),
            })?),
            None => None,
        };
        out.push(Interaction {
            user: user.to_string(),
            item: item.to_string(),
            value,
            timestamp,
        });
    }
    if out.is_empty() {
        return Err(Error::NoInteractions);
    }
    Ok(out)
}

pub fn load_ratings(path: &Path, delimiter: &str) -> Result<Vec<Interaction>> {
    parse_ratings(File::open(path)?, delimiter)
}

/// Converts play-count logs into 1..=5 ratings.
///
/// Repeated (user, item) rows are summed. Within each user, an item's count
/// percentile is the fraction of that user's distinct items whose count is
/// less than or equal to it, and the rating is `ceil(5 * percentile)`.
pub fn frequency_to_ratings(interactions: &[Interaction]) -> Result<Dataset> {
    if interactions.is_empty() {
        return Err(Error::NoInteractions);
    }
    let mut counts: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for x in interactions {
        *counts
            .entry(x.user.as_str())
            .or_default()
            .entry(x.item.as_str())
            .or_insert(0.0) += x.value;
    }

    let mut triples = Vec::with_capacity(interactions.len());
    for (user, items) in &counts {
        let mut sorted: Vec<f64> = items.values().copied().filter(|&c| c > 0.0).collect();
        if sorted.is_empty() {
            continue;
        }
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        for (item, &count) in items {
            if count <= 0.0 {
                continue;
            }
            let at_most = sorted.partition_point(|&c| c <= count);
            let rating = (5 * at_most).div_ceil(n);
            triples.push((user.to_string(), item.to_string(), rating as f64));
        }
    }
    if triples.is_empty() {
        return Err(Error::NoInteractions);
    }
    Dataset::from_triples(triples)
}

/// Drops users with fewer than `min_profile` ratings, then any item left
/// without ratings. Applied once; no iterative re-filtering.
pub fn filter_min_profile(d: &Dataset, min_profile: usize) -> Result<Dataset> {
    if min_profile == 0 {
        return Ok(d.clone());
    }
    let keep: Vec<bool> = (0..d.num_users())
        .map(|u| d.profile(u).len() >= min_profile)
        .collect();
    let removed = keep.iter().filter(|k| !**k).count();
    if removed == d.num_users() {
        return Err(Error::EmptyAfterFilter);
    }
    if removed > 0 {
        info!("removed {removed} users with fewer than {min_profile} ratings");
    }
    d.retain(|u, _| keep[d.user_idx(u).expect("user from dataset")])
}

/// Train/test pair produced by [`split`].
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: Dataset,
    /// `None` when every rating landed in train.
    pub test: Option<Dataset>,
    pub seed: u64,
}

/// Per-user uniform random split. Each user keeps `round(ratio * |profile|)`
/// ratings in train, and never fewer than one.
pub fn split(d: &Dataset, ratio: f64, seed: u64) -> Result<SplitDataset> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut singletons = 0usize;
    for u in 0..d.num_users() {
        let mut profile: Vec<(usize, f64)> = d.profile(u).to_vec();
        if profile.len() == 1 {
            singletons += 1;
        }
        profile.shuffle(&mut rng);
        let n_train = ((ratio * profile.len() as f64).round() as usize).max(1);
        let user = d.user_id(u);
        for (k, &(i, r)) in profile.iter().enumerate() {
            let row = (user.to_string(), d.item_id(i).to_string(), r);
            if k < n_train {
                train.push(row);
            } else {
                test.push(row);
            }
        }
    }
    if singletons > 0 {
        warn!("{singletons} users have a single rating; kept in train only");
    }
    Ok(SplitDataset {
        train: Dataset::from_triples(train)?,
        test: if test.is_empty() {
            None
        } else {
            Some(Dataset::from_triples(test)?)
        },
        seed,
    })
}

/// Total map from item id to supplier id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SupplierMap {
    assignment: HashMap<String, String>,
}

impl SupplierMap {
    pub fn from_pairs<I, A, B>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let mut assignment: HashMap<String, String> = HashMap::new();
        for (item, supplier) in pairs {
            let (item, supplier) = (item.into(), supplier.into());
            match assignment.get(&item) {
                Some(existing) if *existing != supplier => {
                    return Err(Error::ConflictingSupplier {
                        item,
                        first: existing.clone(),
                        second: supplier,
                    });
                }
                Some(_) => {}
                None => {
                    assignment.insert(item, supplier);
                }
            }
        }
        Ok(Self { assignment })
    }

    pub fn supplier(&self, item: &str) -> Option<&str> {
        self.assignment.get(item).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Distinct supplier ids, ascending.
    pub fn suppliers(&self) -> Vec<&str> {
        let mut s: Vec<&str> = self.assignment.values().map(String::as_str).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// (item, supplier) pairs in ascending item order.
    pub fn pairs(&self) -> Vec<(&str, &str)> {
        let mut p: Vec<(&str, &str)> = self
            .assignment
            .iter()
            .map(|(i, s)| (i.as_str(), s.as_str()))
            .collect();
        p.sort_unstable();
        p
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, s) in self.pairs() {
            writeln!(out, "{i}\t{s}")?;
        }
        Ok(())
    }
}

/// Parses `item<d>supplier` rows.
pub fn parse_supplier_map<R: Read>(reader: R, delimiter: &str) -> Result<SupplierMap> {
    let mut pairs = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(2, delimiter);
        match (fields.next(), fields.next()) {
            (Some(item), Some(supplier)) if !item.trim().is_empty() && !supplier.trim().is_empty() => {
                pairs.push((item.trim().to_string(), supplier.trim().to_string()));
            }
            _ => {
                return Err(Error::Parse {
                    line: n + 1,
                    message: "expected item and supplier".into(),
                })
            }
        }
    }
    SupplierMap::from_pairs(pairs)
}

/// Restricts a supplier map to the dataset's items and the dataset to the
/// mapped items. Returns the number of dropped items alongside.
pub fn restrict_to_suppliers(map: &SupplierMap, d: &Dataset) -> Result<(SupplierMap, Dataset, usize)> {
    let dropped = d.items().iter().filter(|i| map.supplier(i).is_none()).count();
    let restricted = SupplierMap::from_pairs(
        d.items()
            .iter()
            .filter_map(|i| map.supplier(i).map(|s| (i.clone(), s.to_string()))),
    )?;
    let data = if dropped == 0 {
        d.clone()
    } else {
        info!("dropped {dropped} items without a supplier");
        d.retain(|_, i| map.supplier(i).is_some())?
    };
    Ok((restricted, data, dropped))
}

pub fn load_supplier_map(path: &Path, delimiter: &str, d: &Dataset) -> Result<(SupplierMap, Dataset)> {
    let map = parse_supplier_map(File::open(path)?, delimiter)?;
    let (map, data, _) = restrict_to_suppliers(&map, d)?;
    Ok((map, data))
}
