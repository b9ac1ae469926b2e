//! Overall and multistakeholder metrics over a set of final lists.
//!
//! Overall: precision, aggregate diversity, long-tail coverage, Gini.
//! Suppliers: ESF and SPD. Items: IPD. Users: UPD.

use std::collections::{HashMap, HashSet};
use std::io::Write;

use log::info;

use crate::data::{Dataset, SupplierMap};
use crate::error::{Error, Result};
use crate::partition::{
    list_distribution, profile_distribution, GroupLabel, ItemGroup, PopularityPartition, SupplierGroup,
    SupplierPartition, UserGroup, UserGroups,
};
use crate::rerank::{js_divergence, RankedList};
use crate::scalar::Scalar;

/// Final lists of one run together with the multiset `L` of recommended
/// items.
#[derive(Debug, Clone)]
pub struct RunOutput {
    lists: Vec<RankedList>,
    frequency: HashMap<String, usize>,
    slots: usize,
}

impl RunOutput {
    pub fn new(lists: Vec<RankedList>) -> Self {
        let mut frequency = HashMap::new();
        let mut slots = 0;
        for l in &lists {
            for i in &l.items {
                *frequency.entry(i.clone()).or_insert(0) += 1;
                slots += 1;
            }
        }
        Self {
            lists,
            frequency,
            slots,
        }
    }

    pub fn lists(&self) -> &[RankedList] {
        &self.lists
    }

    /// `|L|`, the total number of recommendation slots.
    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn num_users(&self) -> usize {
        self.lists.len()
    }

    /// Number of lists containing the item.
    pub fn frequency(&self, item: &str) -> usize {
        self.frequency.get(item).copied().unwrap_or(0)
    }

    /// Distinct recommended items.
    pub fn distinct(&self) -> impl Iterator<Item = &str> {
        self.frequency.keys().map(String::as_str)
    }
}

/// Signed per-group deviations `q - p` plus their summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupDeviation<T> {
    pub per_group: [T; 3],
    pub average: T,
}

/// Mean over users with a non-empty test set of `|ℓ_u ∩ test_u| / n`,
/// counting only test ratings at or above `min_rating` when given.
pub fn precision_at_n<T: Scalar>(run: &RunOutput, test: &Dataset, n: usize, min_rating: Option<f64>) -> Result<T> {
    let evaluated: Vec<T> = per_user_precision::<T>(run, test, n, min_rating)?
        .into_iter()
        .flatten()
        .collect();
    if evaluated.is_empty() {
        return Err(Error::NoEvaluableUsers);
    }
    Ok(evaluated.iter().copied().sum::<T>() / T::from_count(evaluated.len()))
}

fn per_user_precision<T: Scalar>(
    run: &RunOutput,
    test: &Dataset,
    n: usize,
    min_rating: Option<f64>,
) -> Result<Vec<Option<T>>> {
    if n == 0 {
        return Err(Error::InvalidConfig("list size n must be positive".into()));
    }
    let mut skipped = 0usize;
    let out: Vec<Option<T>> = run
        .lists()
        .iter()
        .map(|l| {
            let relevant = |item: &str| match test.rating(&l.user, item) {
                Some(r) => min_rating.is_none_or(|m| r >= m),
                None => false,
            };
            let has_test = test.user_idx(&l.user).is_some_and(|u| {
                test.profile(u)
                    .iter()
                    .any(|&(_, r)| min_rating.is_none_or(|m| r >= m))
            });
            if !has_test {
                skipped += 1;
                return None;
            }
            let hits = l.items.iter().filter(|i| relevant(i)).count();
            Some(T::from_count(hits) / T::from_count(n))
        })
        .collect();
    if skipped > 0 {
        info!("precision: skipped {skipped} users without test ratings");
    }
    Ok(out)
}

/// `|∪_u ℓ_u| / |I|`.
pub fn agg_div<T: Scalar>(run: &RunOutput, catalog_size: usize) -> Result<T> {
    if catalog_size == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(T::from_count(run.frequency.len()) / T::from_count(catalog_size))
}

/// `|∪_u (ℓ_u ∩ (M ∪ T))| / |M ∪ T|`; zero when there are no long-tail items.
pub fn long_tail_coverage<T: Scalar>(run: &RunOutput, part: &PopularityPartition) -> T {
    let long_tail = part.members(ItemGroup::Mid).len() + part.members(ItemGroup::Tail).len();
    if long_tail == 0 {
        return T::zero();
    }
    let covered = run
        .distinct()
        .filter(|i| part.group(i).is_some_and(ItemGroup::is_long_tail))
        .count();
    T::from_count(covered) / T::from_count(long_tail)
}

/// Gini index of the recommendation shares over the whole catalog,
/// unrecommended items included with share zero. 0 is perfectly even
/// exposure, 1 is every slot on one item.
pub fn gini<T: Scalar>(run: &RunOutput, catalog_size: usize) -> Result<T> {
    if catalog_size < 2 {
        return Err(Error::CatalogTooSmall);
    }
    let distinct = run.frequency.len();
    if distinct > catalog_size {
        return Err(Error::InvalidConfig(format!(
            "{distinct} distinct recommended items exceed the catalog of {catalog_size}"
        )));
    }
    if run.slots == 0 {
        return Ok(T::zero());
    }
    let mut counts: Vec<usize> = run.frequency.values().copied().collect();
    counts.sort_unstable();
    let total = T::from_count(run.slots);
    let size = T::from_count(catalog_size);
    let zeros = catalog_size - distinct;
    // Zero-share items occupy ranks 1..=zeros and contribute nothing.
    let sum: T = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let rank = T::from_count(zeros + k + 1);
            (T::lit(2.0) * rank - size - T::one()) * (T::from_count(c) / total)
        })
        .sum();
    Ok(sum / (size - T::one()))
}

fn supplier_group_of(item: &str, map: &SupplierMap, spart: &SupplierPartition) -> Result<SupplierGroup> {
    let s = map
        .supplier(item)
        .ok_or_else(|| Error::MissingSupplier(item.to_string()))?;
    spart
        .group(s)
        .ok_or_else(|| Error::InvalidConfig(format!("supplier {s} has no group")))
}

fn item_group_of(item: &str, part: &PopularityPartition) -> Result<ItemGroup> {
    part.group(item).ok_or_else(|| Error::UnassignedItem(item.to_string()))
}

/// Slot counts of `L` per group.
fn slot_counts<F>(run: &RunOutput, mut group: F) -> Result<[usize; 3]>
where
    F: FnMut(&str) -> Result<usize>,
{
    let mut counts = [0usize; 3];
    for l in run.lists() {
        for i in &l.items {
            counts[group(i)?] += 1;
        }
    }
    Ok(counts)
}

/// Train rating counts per group.
fn rating_counts<F>(train: &Dataset, mut group: F) -> Result<[usize; 3]>
where
    F: FnMut(&str) -> Result<usize>,
{
    let mut counts = [0usize; 3];
    for i in 0..train.num_items() {
        counts[group(train.item_id(i))?] += train.item_count(i);
    }
    Ok(counts)
}

fn deviation<T: Scalar>(slots: [usize; 3], ratings: [usize; 3]) -> GroupDeviation<T> {
    let share = |c: [usize; 3]| {
        let total: usize = c.iter().sum();
        c.map(|x| if total == 0 { T::zero() } else { T::from_count(x) / T::from_count(total) })
    };
    let (q, p) = (share(slots), share(ratings));
    let per_group = [0, 1, 2].map(|g| q[g] - p[g]);
    let average = per_group.iter().map(|d| d.abs()).sum::<T>() / T::lit(3.0);
    GroupDeviation { per_group, average }
}

/// `Σ_bins sqrt(#slots in L whose supplier is in the bin)`.
pub fn esf<T: Scalar>(run: &RunOutput, spart: &SupplierPartition, map: &SupplierMap) -> Result<T> {
    let counts = slot_counts(run, |i| supplier_group_of(i, map, spart).map(GroupLabel::index))?;
    Ok(counts.iter().map(|&c| T::from_count(c).sqrt()).sum())
}

/// Supplier popularity deviation: `q(s) - p(s)` per supplier group, where
/// `q` is the share of recommendation slots and `p` the share of train
/// ratings, and the mean absolute deviation.
pub fn spd<T: Scalar>(
    run: &RunOutput,
    train: &Dataset,
    spart: &SupplierPartition,
    map: &SupplierMap,
) -> Result<GroupDeviation<T>> {
    let group = |i: &str| supplier_group_of(i, map, spart).map(GroupLabel::index);
    Ok(deviation(slot_counts(run, group)?, rating_counts(train, group)?))
}

/// Item popularity deviation over H/M/T, structured like [`spd`].
pub fn ipd<T: Scalar>(run: &RunOutput, train: &Dataset, part: &PopularityPartition) -> Result<GroupDeviation<T>> {
    let group = |i: &str| item_group_of(i, part).map(GroupLabel::index);
    Ok(deviation(slot_counts(run, group)?, rating_counts(train, group)?))
}

/// Per-user miscalibration `JS(P(ρ_u), Q(ℓ_u))` for every non-empty list.
fn miscalibration<T: Scalar>(run: &RunOutput, train: &Dataset, part: &PopularityPartition) -> Result<Vec<Option<T>>> {
    run.lists()
        .iter()
        .map(|l| {
            if l.items.is_empty() {
                return Ok(None);
            }
            let p = profile_distribution::<T>(&l.user, train, part)?;
            let q = list_distribution::<T, _>(&l.items, part)?;
            js_divergence(&p, &q).map(Some)
        })
        .collect()
}

/// User popularity deviation: mean miscalibration within each user group,
/// then the unweighted mean over groups that have at least one list.
pub fn upd<T: Scalar>(
    run: &RunOutput,
    train: &Dataset,
    part: &PopularityPartition,
    groups: &UserGroups,
) -> Result<GroupDeviation<T>> {
    let per_user = miscalibration::<T>(run, train, part)?;
    upd_from(run, &per_user, groups)
}

fn upd_from<T: Scalar>(run: &RunOutput, per_user: &[Option<T>], groups: &UserGroups) -> Result<GroupDeviation<T>> {
    let mut sums = [T::zero(); 3];
    let mut counts = [0usize; 3];
    for (l, js) in run.lists().iter().zip(per_user) {
        if let Some(js) = js {
            let g = groups
                .group(&l.user)
                .ok_or_else(|| Error::UnknownUser(l.user.clone()))?
                .index();
            sums[g] = sums[g] + *js;
            counts[g] += 1;
        }
    }
    let per_group = [0, 1, 2].map(|g| {
        if counts[g] == 0 {
            T::zero()
        } else {
            sums[g] / T::from_count(counts[g])
        }
    });
    let populated = counts.iter().filter(|&&c| c > 0).count();
    let average = if populated == 0 {
        T::zero()
    } else {
        (0..3).filter(|&g| counts[g] > 0).map(|g| per_group[g]).sum::<T>() / T::from_count(populated)
    };
    Ok(GroupDeviation { per_group, average })
}

/// One row of the exposure-vs-popularity table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureRow<T> {
    pub item: String,
    pub train_count: usize,
    pub group: ItemGroup,
    /// Fraction of users whose list contains the item.
    pub exposure: T,
}

/// Exposure of every train item, most popular first.
pub fn exposure_table<T: Scalar>(
    run: &RunOutput,
    train: &Dataset,
    part: &PopularityPartition,
) -> Result<Vec<ExposureRow<T>>> {
    let users = T::from_count(run.num_users().max(1));
    let mut rows: Vec<ExposureRow<T>> = (0..train.num_items())
        .map(|i| {
            let item = train.item_id(i);
            Ok(ExposureRow {
                item: item.to_string(),
                train_count: train.item_count(i),
                group: item_group_of(item, part)?,
                exposure: T::from_count(run.frequency(item)) / users,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| b.train_count.cmp(&a.train_count).then_with(|| a.item.cmp(&b.item)));
    Ok(rows)
}

/// Everything evaluation needs besides the lists themselves.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub train: &'a Dataset,
    pub test: &'a Dataset,
    /// `|I|`: size of the item catalog after filtering.
    pub catalog_size: usize,
    pub n: usize,
    pub min_rating: Option<f64>,
    pub items: &'a PopularityPartition,
    pub users: &'a UserGroups,
    pub suppliers: Option<(&'a SupplierMap, &'a SupplierPartition)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserRow<T> {
    pub user: String,
    pub group: Option<UserGroup>,
    pub precision: Option<T>,
    pub miscalibration: Option<T>,
}

/// All metric values for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport<T> {
    pub precision: T,
    pub agg_div: T,
    pub lc: T,
    pub gini: T,
    pub esf: Option<T>,
    pub ipd: GroupDeviation<T>,
    pub upd: GroupDeviation<T>,
    pub spd: Option<GroupDeviation<T>>,
    pub exposure: Vec<ExposureRow<T>>,
    pub per_user: Vec<UserRow<T>>,
}

pub fn evaluate<T: Scalar>(ctx: &EvalContext<'_>, run: &RunOutput) -> Result<MetricsReport<T>> {
    let precision_rows = per_user_precision::<T>(run, ctx.test, ctx.n, ctx.min_rating)?;
    let miscal = miscalibration::<T>(run, ctx.train, ctx.items)?;
    let evaluated: Vec<T> = precision_rows.iter().flatten().copied().collect();
    if evaluated.is_empty() {
        return Err(Error::NoEvaluableUsers);
    }
    let precision = evaluated.iter().copied().sum::<T>() / T::from_count(evaluated.len());
    let (esf, spd) = match ctx.suppliers {
        Some((map, spart)) => (Some(esf(run, spart, map)?), Some(spd(run, ctx.train, spart, map)?)),
        None => (None, None),
    };
    let per_user = run
        .lists()
        .iter()
        .zip(precision_rows)
        .zip(&miscal)
        .map(|((l, p), m)| UserRow {
            user: l.user.clone(),
            group: ctx.users.group(&l.user),
            precision: p,
            miscalibration: *m,
        })
        .collect();
    Ok(MetricsReport {
        precision,
        agg_div: agg_div(run, ctx.catalog_size)?,
        lc: long_tail_coverage(run, ctx.items),
        gini: gini(run, ctx.catalog_size)?,
        esf,
        ipd: ipd(run, ctx.train, ctx.items)?,
        upd: upd_from(run, &miscal, ctx.users)?,
        spd,
        exposure: exposure_table(run, ctx.train, ctx.items)?,
        per_user,
    })
}

/// Column names of a report row, in order.
pub const REPORT_COLUMNS: [&str; 17] = [
    "precision", "Agg-Div", "LC", "Gini", "ESF", "IPD", "UPD", "SPD", "IPD_H", "IPD_M", "IPD_T", "UPD_G1", "UPD_G2",
    "UPD_G3", "SPD_S1", "SPD_S2", "SPD_S3",
];

fn fmt_opt<T: Scalar>(v: Option<T>) -> String {
    v.map(|x| format!("{:.6}", x.as_f64())).unwrap_or_default()
}

impl<T: Scalar> MetricsReport<T> {
    /// Values aligned with [`REPORT_COLUMNS`], formatted to six decimals.
    /// Supplier columns are empty when no supplier map was given.
    pub fn row(&self) -> Vec<String> {
        let f = |x: T| format!("{:.6}", x.as_f64());
        let mut out = vec![
            f(self.precision),
            f(self.agg_div),
            f(self.lc),
            f(self.gini),
            fmt_opt(self.esf),
            f(self.ipd.average),
            f(self.upd.average),
            fmt_opt(self.spd.map(|d| d.average)),
        ];
        out.extend(self.ipd.per_group.iter().map(|&x| f(x)));
        out.extend(self.upd.per_group.iter().map(|&x| f(x)));
        out.extend((0..3).map(|g| fmt_opt(self.spd.map(|d| d.per_group[g]))));
        out
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", REPORT_COLUMNS.join(","))?;
        writeln!(out, "{}", self.row().join(","))?;
        Ok(())
    }

    /// `item,train_count,group,exposure` rows.
    pub fn write_exposure_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "item,train_count,group,exposure")?;
        for r in &self.exposure {
            writeln!(out, "{},{},{},{:.6}", r.item, r.train_count, r.group, r.exposure.as_f64())?;
        }
        Ok(())
    }

    /// `user,group,precision,miscalibration` rows for external significance
    /// testing.
    pub fn write_per_user_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "user,group,precision,miscalibration")?;
        for r in &self.per_user {
            writeln!(
                out,
                "{},{},{},{}",
                r.user,
                r.group.map(|g| g.to_string()).unwrap_or_default(),
                fmt_opt(r.precision),
                fmt_opt(r.miscalibration)
            )?;
        }
        Ok(())
    }
}

/// Items of the catalog `I`: every item of train or test.
pub fn catalog_size(train: &Dataset, test: &Dataset) -> usize {
    let mut all: HashSet<&str> = train.items().iter().map(String::as_str).collect();
    all.extend(test.items().iter().map(String::as_str));
    all.len()
}
