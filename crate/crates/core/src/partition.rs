//! Popularity groups for items (H/M/T), suppliers (S1..S3) and users
//! (G1..G3), and the per-user / per-list category distributions.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use crate::data::{Dataset, SupplierMap};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance applied to share boundaries so that exact decimal shares such as
/// `20 / 100 <= 0.2` are not lost to rounding.
const SHARE_EPS: f64 = 1e-12;

/// A three-way popularity label. `index()` 0 is the most popular group.
pub trait GroupLabel: Copy + Eq + fmt::Debug + fmt::Display + 'static {
    const ALL: [Self; 3];

    fn index(self) -> usize;

    fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|l| l.to_string() == s)
    }
}

macro_rules! group_label {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name { $($variant),+ }

        impl GroupLabel for $name {
            const ALL: [Self; 3] = [$($name::$variant),+];

            fn index(self) -> usize {
                self as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($name::$variant => $text),+ })
            }
        }
    };
}

group_label!(
    /// Item popularity group: short head, mid, tail.
    ItemGroup { Head => "H", Mid => "M", Tail => "T" }
);
group_label!(
    /// Supplier popularity group, S1 most popular.
    SupplierGroup { S1 => "S1", S2 => "S2", S3 => "S3" }
);
group_label!(
    /// User group by popularity propensity, G1 most popularity-focused.
    UserGroup { G1 => "G1", G2 => "G2", G3 => "G3" }
);

impl ItemGroup {
    /// Long-tail items, `M ∪ T`.
    pub fn is_long_tail(self) -> bool {
        self != ItemGroup::Head
    }
}

/// Assignment of entities to three popularity groups plus the share of train
/// ratings each group holds.
#[derive(Debug, Clone)]
pub struct Partition<L: GroupLabel> {
    assignment: HashMap<String, L>,
    members: [Vec<String>; 3],
    rating_share: [f64; 3],
}

pub type PopularityPartition = Partition<ItemGroup>;
pub type SupplierPartition = Partition<SupplierGroup>;

impl<L: GroupLabel> Partition<L> {
    /// Builds a partition from per-entity rating counts. Entities are ranked
    /// by count descending, ties by id ascending; the head is the shortest
    /// prefix whose share reaches `head_share` and the tail the longest
    /// remaining suffix whose share stays within `tail_share`.
    pub fn from_counts(counts: &[(String, usize)], head_share: f64, tail_share: f64) -> Result<Self> {
        validate_shares(head_share, tail_share)?;
        if counts.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut ranked: Vec<&(String, usize)> = counts.iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let total: usize = ranked.iter().map(|(_, c)| c).sum();
        if total == 0 {
            return Err(Error::EmptyDataset);
        }
        let total = total as f64;

        let mut head_len = 0;
        let mut cum = 0usize;
        for (_, c) in &ranked {
            cum += c;
            head_len += 1;
            if cum as f64 / total >= head_share - SHARE_EPS {
                break;
            }
        }

        let mut tail_len = 0;
        let mut cum = 0usize;
        for (_, c) in ranked[head_len..].iter().rev() {
            if (cum + c) as f64 / total > tail_share + SHARE_EPS {
                break;
            }
            cum += c;
            tail_len += 1;
        }

        let mid_end = ranked.len() - tail_len;
        let mut assignment = HashMap::with_capacity(ranked.len());
        let mut members: [Vec<String>; 3] = Default::default();
        let mut mass = [0usize; 3];
        for (pos, (id, c)) in ranked.iter().enumerate() {
            let g = if pos < head_len {
                0
            } else if pos < mid_end {
                1
            } else {
                2
            };
            assignment.insert(id.clone(), L::from_index(g));
            members[g].push(id.clone());
            mass[g] += c;
        }
        Ok(Self {
            assignment,
            members,
            rating_share: mass.map(|m| m as f64 / total),
        })
    }

    /// Rebuilds a partition from a stored assignment, recomputing rating
    /// shares from the given counts. Members keep count-descending order.
    pub fn from_assignment(assignment: HashMap<String, L>, counts: &[(String, usize)]) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let count_of: HashMap<&str, usize> = counts.iter().map(|(k, c)| (k.as_str(), *c)).collect();
        let mut ranked: Vec<(&String, usize)> = assignment
            .keys()
            .map(|k| (k, count_of.get(k.as_str()).copied().unwrap_or(0)))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut members: [Vec<String>; 3] = Default::default();
        let mut mass = [0usize; 3];
        for (id, c) in ranked {
            let g = assignment[id].index();
            members[g].push(id.clone());
            mass[g] += c;
        }
        let total: usize = mass.iter().sum();
        let rating_share = if total == 0 {
            [0.0; 3]
        } else {
            mass.map(|m| m as f64 / total as f64)
        };
        Ok(Self {
            assignment,
            members,
            rating_share,
        })
    }

    pub fn group(&self, id: &str) -> Option<L> {
        self.assignment.get(id).copied()
    }

    /// Members of a group in popularity order.
    pub fn members(&self, label: L) -> &[String] {
        &self.members[label.index()]
    }

    pub fn sizes(&self) -> [usize; 3] {
        [0, 1, 2].map(|g| self.members[g].len())
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Share of train ratings held by each group, indexed by `L::index`.
    pub fn rating_share(&self) -> [f64; 3] {
        self.rating_share
    }

    /// Writes `id<TAB>label` rows in popularity order.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for label in L::ALL {
            for id in self.members(label) {
                writeln!(out, "{id}\t{label}")?;
            }
        }
        Ok(())
    }
}

fn validate_shares(head: f64, tail: f64) -> Result<()> {
    if !(head > 0.0 && tail > 0.0 && head + tail < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "group shares must be positive with head + tail < 1, got {head} and {tail}"
        )));
    }
    Ok(())
}

/// Parses `id<TAB>label` rows into an assignment map.
pub fn read_assignment<L: GroupLabel, R: Read>(reader: R) -> Result<HashMap<String, L>> {
    let mut out = HashMap::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut f = line.split('\t');
        let (id, label) = match (f.next(), f.next()) {
            (Some(id), Some(label)) => (id.trim(), label.trim()),
            _ => {
                return Err(Error::Parse {
                    line: n + 1,
                    message: "expected id and label".into(),
                })
            }
        };
        let label = L::parse(label).ok_or_else(|| Error::Parse {
            line: n + 1,
            message: format!("unknown group label '{label}'"),
        })?;
        out.insert(id.to_string(), label);
    }
    Ok(out)
}

/// Train rating count per item.
pub fn item_counts(train: &Dataset) -> Vec<(String, usize)> {
    (0..train.num_items())
        .map(|i| (train.item_id(i).to_string(), train.item_count(i)))
        .collect()
}

/// Summed train rating count per supplier. Suppliers whose items have no
/// train ratings are included with count zero.
pub fn supplier_counts(train: &Dataset, map: &SupplierMap) -> Result<Vec<(String, usize)>> {
    let mut totals: HashMap<&str, usize> = map.suppliers().into_iter().map(|s| (s, 0)).collect();
    for i in 0..train.num_items() {
        let item = train.item_id(i);
        let s = map
            .supplier(item)
            .ok_or_else(|| Error::MissingSupplier(item.to_string()))?;
        *totals.entry(s).or_insert(0) += train.item_count(i);
    }
    let mut out: Vec<(String, usize)> = totals.into_iter().map(|(s, c)| (s.to_string(), c)).collect();
    out.sort_unstable();
    Ok(out)
}

pub fn partition_items(train: &Dataset, head_share: f64, tail_share: f64) -> Result<PopularityPartition> {
    Partition::from_counts(&item_counts(train), head_share, tail_share)
}

pub fn partition_suppliers(
    train: &Dataset,
    map: &SupplierMap,
    head_share: f64,
    tail_share: f64,
) -> Result<SupplierPartition> {
    Partition::from_counts(&supplier_counts(train, map)?, head_share, tail_share)
}

/// Discrete probability vector over a fixed, ordered set of categories.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryDistribution<T> {
    probs: Vec<T>,
}

impl<T: Scalar> CategoryDistribution<T> {
    /// Validates that entries are non-negative and sum to one within 1e-6.
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("no categories".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < T::zero()) {
            return Err(Error::InvalidDistribution(format!("negative or non-finite entry in {probs:?}")));
        }
        let sum: T = probs.iter().copied().sum();
        if (sum - T::one()).abs() > T::lit(1e-6) {
            return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative masses into a distribution.
    pub fn from_masses(masses: &[T]) -> Result<Self> {
        let total: T = masses.iter().copied().sum();
        if masses.is_empty() || !(total > T::zero()) {
            return Err(Error::InvalidDistribution("masses sum to zero".into()));
        }
        Ok(Self {
            probs: masses.iter().map(|&m| m / total).collect(),
        })
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn get(&self, c: usize) -> T {
        self.probs[c]
    }

    /// Collapses an (H, M, T) distribution into (H, M ∪ T).
    pub fn head_longtail(&self) -> Result<Self> {
        if self.probs.len() != 3 {
            return Err(Error::DimensionMismatch {
                left: self.probs.len(),
                right: 3,
            });
        }
        Ok(Self {
            probs: vec![self.probs[0], self.probs[1] + self.probs[2]],
        })
    }
}

/// Rating-weighted propensity p(c|u) of a user's train profile over H/M/T.
pub fn profile_distribution<T: Scalar>(
    user: &str,
    train: &Dataset,
    part: &PopularityPartition,
) -> Result<CategoryDistribution<T>> {
    let u = train
        .user_idx(user)
        .ok_or_else(|| Error::UnknownUser(user.to_string()))?;
    profile_distribution_idx(u, train, part)
}

pub(crate) fn profile_distribution_idx<T: Scalar>(
    u: usize,
    train: &Dataset,
    part: &PopularityPartition,
) -> Result<CategoryDistribution<T>> {
    let profile = train.profile(u);
    if profile.is_empty() {
        return Err(Error::EmptyProfile(train.user_id(u).to_string()));
    }
    let mut mass = [T::zero(); 3];
    for &(i, r) in profile {
        let item = train.item_id(i);
        let g = part
            .group(item)
            .ok_or_else(|| Error::UnassignedItem(item.to_string()))?;
        mass[g.index()] = mass[g.index()] + T::lit(r);
    }
    CategoryDistribution::from_masses(&mass)
        .map_err(|_| Error::EmptyProfile(train.user_id(u).to_string()))
}

/// Unweighted share q(c) of list items in each of H/M/T.
pub fn list_distribution<T: Scalar, S: AsRef<str>>(
    list: &[S],
    part: &PopularityPartition,
) -> Result<CategoryDistribution<T>> {
    if list.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut mass = [0usize; 3];
    for item in list {
        let item = item.as_ref();
        let g = part
            .group(item)
            .ok_or_else(|| Error::UnassignedItem(item.to_string()))?;
        mass[g.index()] += 1;
    }
    let n = T::from_count(list.len());
    Ok(CategoryDistribution {
        probs: mass.iter().map(|&m| T::from_count(m) / n).collect(),
    })
}

/// Users binned into three near-equal groups by propensity toward popular
/// items.
#[derive(Debug, Clone)]
pub struct UserGroups {
    assignment: HashMap<String, UserGroup>,
    members: [Vec<String>; 3],
}

impl UserGroups {
    pub fn group(&self, user: &str) -> Option<UserGroup> {
        self.assignment.get(user).copied()
    }

    pub fn members(&self, g: UserGroup) -> &[String] {
        &self.members[g.index()]
    }

    pub fn sizes(&self) -> [usize; 3] {
        [0, 1, 2].map(|g| self.members[g].len())
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn from_assignment(assignment: HashMap<String, UserGroup>) -> Self {
        let mut members: [Vec<String>; 3] = Default::default();
        for (u, g) in &assignment {
            members[g.index()].push(u.clone());
        }
        for m in &mut members {
            m.sort_unstable();
        }
        Self { assignment, members }
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for g in UserGroup::ALL {
            for u in self.members(g) {
                writeln!(out, "{u}\t{g}")?;
            }
        }
        Ok(())
    }
}

/// Sizes of `n` items split into three contiguous bins, remainder first.
pub fn bin_sizes(n: usize) -> [usize; 3] {
    let base = n / 3;
    let rem = n % 3;
    [0, 1, 2].map(|b| base + usize::from(b < rem))
}

/// Sorts users by (p(H), p(M), p(T)) descending, ties by user id ascending,
/// and cuts the order into G1..G3.
pub fn partition_users(train: &Dataset, part: &PopularityPartition) -> Result<UserGroups> {
    let n = train.num_users();
    if n < 3 {
        return Err(Error::TooFewUsers { required: 3, actual: n });
    }
    let mut scored: Vec<(usize, CategoryDistribution<f64>)> = (0..n)
        .map(|u| profile_distribution_idx::<f64>(u, train, part).map(|p| (u, p)))
        .collect::<Result<_>>()?;
    // Users are interned in ascending id order, so the index is the id tie-break.
    scored.sort_by(|(ua, pa), (ub, pb)| {
        pa.probs()
            .iter()
            .zip(pb.probs())
            .map(|(a, b)| b.total_cmp(a))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
            .then(ua.cmp(ub))
    });

    let sizes = bin_sizes(n);
    let mut assignment = HashMap::with_capacity(n);
    let mut members: [Vec<String>; 3] = Default::default();
    let mut it = scored.into_iter();
    for (g, &size) in sizes.iter().enumerate() {
        for (u, _) in it.by_ref().take(size) {
            let id = train.user_id(u).to_string();
            assignment.insert(id.clone(), UserGroup::from_index(g));
            members[g].push(id);
        }
    }
    Ok(UserGroups { assignment, members })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(c: &[usize]) -> Vec<(String, usize)> {
        c.iter().enumerate().map(|(k, &n)| (format!("i{}", k + 1), n)).collect()
    }

    fn ids(v: &[String]) -> Vec<&str> {
        v.iter().map(String::as_str).collect()
    }

    #[test]
    fn head_mid_tail_boundaries() {
        let p = PopularityPartition::from_counts(&counts(&[50, 30, 10, 5, 3, 2]), 0.2, 0.2).unwrap();
        assert_eq!(ids(p.members(ItemGroup::Head)), ["i1"]);
        assert_eq!(ids(p.members(ItemGroup::Mid)), ["i2"]);
        assert_eq!(ids(p.members(ItemGroup::Tail)), ["i3", "i4", "i5", "i6"]);
        let s = p.rating_share();
        assert!((s[2] - 0.2).abs() < 1e-12);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equal_counts_split_two_six_two() {
        let c: Vec<(String, usize)> = (0..10).map(|k| (format!("i{k:02}"), 7)).collect();
        let p = PopularityPartition::from_counts(&c, 0.2, 0.2).unwrap();
        assert_eq!(p.sizes(), [2, 6, 2]);
        assert_eq!(ids(p.members(ItemGroup::Head)), ["i00", "i01"]);
        assert_eq!(ids(p.members(ItemGroup::Tail)), ["i08", "i09"]);
    }

    #[test]
    fn single_item_is_all_head() {
        let p = PopularityPartition::from_counts(&counts(&[4]), 0.2, 0.2).unwrap();
        assert_eq!(p.sizes(), [1, 0, 0]);
    }

    #[test]
    fn rejects_bad_shares_and_empty_input() {
        assert!(PopularityPartition::from_counts(&counts(&[1, 2]), 0.6, 0.4).is_err());
        assert!(PopularityPartition::from_counts(&counts(&[1, 2]), 0.0, 0.2).is_err());
        assert!(PopularityPartition::from_counts(&[], 0.2, 0.2).is_err());
    }

    #[test]
    fn two_suppliers() {
        let train = Dataset::from_triples(
            (0..80)
                .map(|u| (format!("u{u}"), "a".to_string(), 1.0))
                .chain((0..20).map(|u| (format!("u{u}"), "b".to_string(), 1.0))),
        )
        .unwrap();
        let map = SupplierMap::from_pairs([("a", "big"), ("b", "small")]).unwrap();
        let p = partition_suppliers(&train, &map, 0.2, 0.2).unwrap();
        assert_eq!(p.group("big"), Some(SupplierGroup::S1));
        assert_eq!(p.group("small"), Some(SupplierGroup::S3));
        assert!(p.members(SupplierGroup::S2).is_empty());

        let one = SupplierMap::from_pairs([("a", "x"), ("b", "x")]).unwrap();
        let p = partition_suppliers(&train, &one, 0.2, 0.2).unwrap();
        assert_eq!(p.group("x"), Some(SupplierGroup::S1));
    }

    fn fixture() -> (Dataset, PopularityPartition) {
        let train = Dataset::from_triples(vec![
            ("u", "a", 4.0),
            ("u", "b", 2.0),
            ("u", "c", 4.0),
        ])
        .unwrap();
        let part = PopularityPartition::from_assignment(
            [("a", ItemGroup::Head), ("b", ItemGroup::Mid), ("c", ItemGroup::Mid)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            &item_counts(&train),
        )
        .unwrap();
        (train, part)
    }

    #[test]
    fn profile_distribution_is_rating_weighted() {
        let (train, part) = fixture();
        let p: CategoryDistribution<f64> = profile_distribution("u", &train, &part).unwrap();
        assert!((p.get(0) - 0.4).abs() < 1e-12);
        assert!((p.get(1) - 0.6).abs() < 1e-12);
        assert_eq!(p.get(2), 0.0);
        let p32: CategoryDistribution<f32> = profile_distribution("u", &train, &part).unwrap();
        assert!((p32.get(0) - 0.4).abs() < 1e-6);
        assert!(profile_distribution::<f64>("nobody", &train, &part).is_err());
    }

    #[test]
    fn list_distribution_counts() {
        let (_, part) = fixture();
        let q: CategoryDistribution<f64> = list_distribution(&["a", "b"], &part).unwrap();
        assert_eq!(q.probs(), &[0.5, 0.5, 0.0]);
        let q: CategoryDistribution<f64> = list_distribution(&["b", "c"], &part).unwrap();
        assert_eq!(q.probs(), &[0.0, 1.0, 0.0]);
        assert!(matches!(
            list_distribution::<f64, &str>(&[], &part),
            Err(Error::EmptyList)
        ));
        assert!(list_distribution::<f64, _>(&["zzz"], &part).is_err());
    }

    #[test]
    fn bins_are_balanced() {
        assert_eq!(bin_sizes(7), [3, 2, 2]);
        assert_eq!(bin_sizes(8), [3, 3, 2]);
        assert_eq!(bin_sizes(9), [3, 3, 3]);
    }

    #[test]
    fn users_sorted_with_mid_tiebreak() {
        // item groups: h* head, m* mid, t* tail
        let mut t = Vec::new();
        let mut add = |u: &str, h: usize, m: usize, tl: usize| {
            for k in 0..h {
                t.push((u.to_string(), format!("h{k}"), 1.0));
            }
            for k in 0..m {
                t.push((u.to_string(), format!("m{k}"), 1.0));
            }
            for k in 0..tl {
                t.push((u.to_string(), format!("t{k}"), 1.0));
            }
        };
        add("u1", 5, 4, 1); // (0.5, 0.4, 0.1)
        add("u2", 5, 3, 2); // (0.5, 0.3, 0.2)
        add("u3", 1, 4, 5);
        add("u4", 9, 1, 0);
        let train = Dataset::from_triples(t).unwrap();
        let part = PopularityPartition::from_assignment(
            train
                .items()
                .iter()
                .map(|i| {
                    let g = match &i[..1] {
                        "h" => ItemGroup::Head,
                        "m" => ItemGroup::Mid,
                        _ => ItemGroup::Tail,
                    };
                    (i.clone(), g)
                })
                .collect(),
            &item_counts(&train),
        )
        .unwrap();
        let g = partition_users(&train, &part).unwrap();
        assert_eq!(g.sizes(), [2, 1, 1]);
        assert_eq!(ids(g.members(UserGroup::G1)), ["u4", "u1"]);
        assert_eq!(g.group("u2"), Some(UserGroup::G2));
        assert_eq!(g.group("u3"), Some(UserGroup::G3));
    }

    #[test]
    fn too_few_users() {
        let (train, part) = fixture();
        assert!(matches!(
            partition_users(&train, &part),
            Err(Error::TooFewUsers { .. })
        ));
    }

    #[test]
    fn assignment_round_trip() {
        let p = PopularityPartition::from_counts(&counts(&[50, 30, 10, 5, 3, 2]), 0.2, 0.2).unwrap();
        let mut buf = Vec::new();
        p.write_tsv(&mut buf).unwrap();
        let a: HashMap<String, ItemGroup> = read_assignment(&buf[..]).unwrap();
        let q = PopularityPartition::from_assignment(a, &counts(&[50, 30, 10, 5, 3, 2])).unwrap();
        assert_eq!(q.members(ItemGroup::Tail), p.members(ItemGroup::Tail));
        assert_eq!(q.rating_share(), p.rating_share());
    }
}
