//! End-to-end runs: ingest, partition, fit, recommend, re-rank, evaluate,
//! over hyperparameter grids, with precision matching and CSV reports.

mod artifacts;
mod report;
mod synthetic;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use artifacts::{read_partitions, sha256_hex, write_manifest, write_partitions, Partitions};
pub use report::{emit_report, GROUPS_HEADER, SWEEP_HEADER, TABLE1_COLUMNS};
pub use synthetic::{generate, generate_synthetic, item_name, SyntheticSpec};

use crate::data::{
    filter_min_profile, frequency_to_ratings, load_ratings, parse_delimiter, parse_supplier_map, restrict_to_suppliers,
    split, Dataset, Interaction, RatingFormat, SplitDataset, SupplierMap,
};
use crate::error::{Error, Result};
use crate::knn::{fit, recommend_all, write_candidates, Aggregation, CandidateList, KnnParams};
use crate::metrics::{catalog_size, evaluate, EvalContext, MetricsReport, RunOutput};
use crate::partition::{partition_items, partition_suppliers, partition_users, profile_distribution, PopularityPartition};
use crate::rerank::{
    cp_rerank, dm_rerank, fs_rerank, top_n, uniform_target, write_lists, xq_rerank, Algorithm, RankedList,
    RerankConfig,
};

/// Where ratings come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// The `ratings` file, read according to `format`.
    #[default]
    File,
    /// [`generate`] with the `synthetic_*` settings.
    Synthetic,
}

/// Flat experiment configuration, read from TOML. Relative paths are
/// resolved against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: Source,
    pub ratings: Option<PathBuf>,
    pub format: RatingFormat,
    pub delimiter: String,
    pub suppliers: Option<PathBuf>,
    pub supplier_delimiter: String,

    pub synthetic_users: usize,
    pub synthetic_items: usize,
    pub synthetic_suppliers: usize,
    pub synthetic_exponent: f64,
    pub synthetic_min_profile: usize,
    pub synthetic_max_profile: usize,

    pub min_profile: usize,
    pub split: f64,
    pub seed: u64,
    pub head_share: f64,
    pub tail_share: f64,

    pub k: usize,
    pub shrinkage: f64,
    pub aggregation: Aggregation,
    pub m: usize,
    pub n: usize,
    /// Test ratings at or above this value count as relevant; all do when
    /// unset.
    pub min_rating: Option<f64>,

    /// Algorithms to sweep besides the base top-n.
    pub algorithms: Vec<Algorithm>,
    pub cp_lambdas: Vec<f64>,
    pub xq_lambdas: Vec<f64>,
    pub fs_p: Vec<f64>,
    pub fs_alpha: Vec<f64>,
    /// Multipliers on the DM exposure target.
    pub dm_scales: Vec<f64>,
    /// `item<TAB>count` target file; the uniform target is used when unset.
    pub dm_target: Option<PathBuf>,

    /// Precision to match; defaults to base precision minus `precision_offset`.
    pub target_precision: Option<f64>,
    pub precision_offset: f64,
    pub precision_tolerance: f64,
    /// Concurrent grid points; 0 uses every core.
    pub workers: usize,
}

fn lambda_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let syn = SyntheticSpec::default();
        Self {
            source: Source::File,
            ratings: None,
            format: RatingFormat::Explicit,
            delimiter: "\t".into(),
            suppliers: None,
            supplier_delimiter: "\t".into(),
            synthetic_users: syn.users,
            synthetic_items: syn.items,
            synthetic_suppliers: syn.suppliers,
            synthetic_exponent: syn.exponent,
            synthetic_min_profile: syn.min_profile,
            synthetic_max_profile: syn.max_profile,
            min_profile: 20,
            split: 0.8,
            seed: 42,
            head_share: 0.2,
            tail_share: 0.2,
            k: 40,
            shrinkage: 10.0,
            aggregation: Aggregation::WeightedAverage,
            m: 100,
            n: 10,
            min_rating: None,
            algorithms: vec![Algorithm::Cp, Algorithm::Xq, Algorithm::Fs, Algorithm::Dm],
            cp_lambdas: lambda_grid(),
            xq_lambdas: lambda_grid(),
            fs_p: vec![0.25, 0.5, 0.75, 0.95],
            fs_alpha: vec![0.05, 0.1, 0.15],
            dm_scales: vec![0.25, 0.5, 0.75, 1.0],
            dm_target: None,
            target_precision: None,
            precision_offset: 0.01,
            precision_tolerance: 0.01,
            workers: 0,
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(msg()))
    }
}

fn check_path(label: &str, path: &Option<PathBuf>) -> Result<()> {
    if let Some(p) = path {
        check(p.is_file(), || format!("{label} file {} does not exist", p.display()))?;
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml_str(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [&mut cfg.ratings, &mut cfg.suppliers, &mut cfg.dm_target] {
            if let Some(rel) = p.as_mut() {
                if rel.is_relative() {
                    *rel = base.join(&*rel);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 12 hex characters of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())[..12].to_string()
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            users: self.synthetic_users,
            items: self.synthetic_items,
            suppliers: self.synthetic_suppliers,
            exponent: self.synthetic_exponent,
            min_profile: self.synthetic_min_profile,
            max_profile: self.synthetic_max_profile,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.source == Source::File {
            check(self.ratings.is_some(), || "a ratings file is required unless source = \"synthetic\"".into())?;
        }
        check_path("ratings", &self.ratings)?;
        check_path("suppliers", &self.suppliers)?;
        check_path("dm_target", &self.dm_target)?;
        check(self.split > 0.0 && self.split < 1.0, || format!("split must lie in (0, 1), got {}", self.split))?;
        check(self.n > 0 && self.m >= self.n, || format!("need 0 < n <= m, got n = {}, m = {}", self.n, self.m))?;
        check(self.k > 0, || "k must be positive".into())?;
        check(self.shrinkage >= 0.0, || "shrinkage must be non-negative".into())?;
        check(self.precision_tolerance >= 0.0, || "precision_tolerance must be non-negative".into())?;
        for &a in &self.algorithms {
            let empty = match a {
                Algorithm::None => false,
                Algorithm::Cp => self.cp_lambdas.is_empty(),
                Algorithm::Xq => self.xq_lambdas.is_empty(),
                Algorithm::Fs => self.fs_p.is_empty() || self.fs_alpha.is_empty(),
                Algorithm::Dm => self.dm_scales.is_empty(),
            };
            check(!empty, || format!("hyperparameter grid for {a} is empty"))?;
        }
        for &l in self.cp_lambdas.iter().chain(&self.xq_lambdas) {
            check((0.0..=1.0).contains(&l), || format!("lambda {l} outside [0, 1]"))?;
        }
        for &s in &self.dm_scales {
            check(s >= 0.0, || format!("dm scale {s} is negative"))?;
        }
        Ok(())
    }

    /// Base point followed by every grid point of the selected algorithms.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut out = vec![GridPoint::base()];
        let mut algos = self.algorithms.clone();
        algos.sort();
        algos.dedup();
        for a in algos {
            match a {
                Algorithm::None => {}
                Algorithm::Cp | Algorithm::Xq => {
                    let grid = if a == Algorithm::Cp { &self.cp_lambdas } else { &self.xq_lambdas };
                    out.extend(grid.iter().map(|&l| GridPoint {
                        algorithm: a,
                        hyper: Hyper::Lambda(l),
                    }));
                }
                Algorithm::Fs => {
                    for &p in &self.fs_p {
                        out.extend(self.fs_alpha.iter().map(|&alpha| GridPoint {
                            algorithm: a,
                            hyper: Hyper::Fair { p, alpha },
                        }));
                    }
                }
                Algorithm::Dm => out.extend(self.dm_scales.iter().map(|&s| GridPoint {
                    algorithm: a,
                    hyper: Hyper::Scale(s),
                })),
            }
        }
        out
    }
}

/// Hyperparameters of one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hyper {
    None,
    Lambda(f64),
    Fair { p: f64, alpha: f64 },
    Scale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub algorithm: Algorithm,
    pub hyper: Hyper,
}

impl GridPoint {
    pub fn base() -> Self {
        Self {
            algorithm: Algorithm::None,
            hyper: Hyper::None,
        }
    }

    /// `-`, `lambda=0.5`, `p=0.5 alpha=0.1` or `scale=0.75`.
    pub fn label(&self) -> String {
        match self.hyper {
            Hyper::None => "-".into(),
            Hyper::Lambda(l) => format!("lambda={l}"),
            Hyper::Fair { p, alpha } => format!("p={p} alpha={alpha}"),
            Hyper::Scale(s) => format!("scale={s}"),
        }
    }

    /// Directory-safe name, e.g. `fs_p=0.5_alpha=0.1`.
    pub fn slug(&self) -> String {
        match self.hyper {
            Hyper::None => self.algorithm.name().into(),
            _ => format!("{}_{}", self.algorithm, self.label().replace(' ', "_")),
        }
    }

    pub fn rerank_config(&self, n: usize) -> RerankConfig<f64> {
        let mut cfg = RerankConfig::with_lambda(0.0, n);
        match self.hyper {
            Hyper::Lambda(l) => cfg.lambda = l,
            Hyper::Fair { p, alpha } => {
                cfg.fs_p = p;
                cfg.fs_alpha = alpha;
            }
            Hyper::None | Hyper::Scale(_) => {}
        }
        cfg
    }
}

/// Loads ratings (converting play counts), drops items without a supplier,
/// filters short profiles and splits.
pub fn ingest(
    interactions: &[Interaction],
    format: RatingFormat,
    suppliers: Option<&SupplierMap>,
    min_profile: usize,
    ratio: f64,
    seed: u64,
) -> Result<(SplitDataset, Option<SupplierMap>)> {
    let data = match format {
        RatingFormat::Explicit => Dataset::from_interactions(interactions)?,
        RatingFormat::Playcount => frequency_to_ratings(interactions)?,
    };
    let (map, data) = match suppliers {
        Some(map) => {
            let (map, data, dropped) = restrict_to_suppliers(map, &data)?;
            if dropped > 0 {
                warn!("dropped {dropped} ratings of items without a supplier");
            }
            (Some(map), data)
        }
        None => (None, data),
    };
    let data = filter_min_profile(&data, min_profile)?;
    Ok((split(&data, ratio, seed)?, map))
}

/// Everything shared by the grid points of a sweep.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub supplier_map: Option<SupplierMap>,
    pub partitions: Partitions,
    pub candidates: Vec<CandidateList>,
    pub catalog_size: usize,
}

impl Prepared {
    pub fn eval_context(&self, n: usize, min_rating: Option<f64>) -> EvalContext<'_> {
        EvalContext {
            train: &self.train,
            test: &self.test,
            catalog_size: self.catalog_size,
            n,
            min_rating,
            items: &self.partitions.items,
            users: &self.partitions.users,
            suppliers: self.supplier_map.as_ref().zip(self.partitions.suppliers.as_ref()),
        }
    }
}

/// Ingests, partitions, fits and recommends candidates for every user.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let (interactions, format, map) = match cfg.source {
        Source::Synthetic => {
            let (d, map) = generate(&cfg.synthetic_spec())?;
            let rows: Vec<Interaction> = d.ratings().map(|(u, i, r)| Interaction::new(u, i, r)).collect();
            (rows, RatingFormat::Explicit, Some(map))
        }
        Source::File => {
            let path = cfg.ratings.as_ref().ok_or_else(|| Error::InvalidConfig("no ratings file".into()))?;
            let rows = load_ratings(path, &parse_delimiter(&cfg.delimiter))?;
            let map = match &cfg.suppliers {
                Some(p) => Some(parse_supplier_map(File::open(p)?, &parse_delimiter(&cfg.supplier_delimiter))?),
                None => None,
            };
            (rows, cfg.format, map)
        }
    };
    let (parts, map) = ingest(&interactions, format, map.as_ref(), cfg.min_profile, cfg.split, cfg.seed)?;
    let train = parts.train;
    let test = parts
        .test
        .ok_or_else(|| Error::InvalidConfig("the split left no test ratings".into()))?;
    info!(
        "train: {} users, {} items, {} ratings; test: {} ratings",
        train.num_users(),
        train.num_items(),
        train.num_ratings(),
        test.num_ratings()
    );

    let items = partition_items(&train, cfg.head_share, cfg.tail_share)?;
    let users = partition_users(&train, &items)?;
    let suppliers = match &map {
        Some(m) => Some(partition_suppliers(&train, m, cfg.head_share, cfg.tail_share)?),
        None => None,
    };
    let model = fit(
        &train,
        KnnParams {
            k: cfg.k,
            shrinkage: cfg.shrinkage,
            aggregation: cfg.aggregation,
        },
    )?;
    let candidates = recommend_all(&model, &train, cfg.m)?;
    Ok(Prepared {
        catalog_size: catalog_size(&train, &test),
        train,
        test,
        supplier_map: map,
        partitions: Partitions {
            items,
            users,
            suppliers,
        },
        candidates,
    })
}

/// Reads an `item<TAB>count` exposure target.
pub fn read_target(path: &Path) -> Result<BTreeMap<String, usize>> {
    let mut out = BTreeMap::new();
    for (n, line) in fs::read_to_string(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut f = line.split('\t');
        let parsed = match (f.next(), f.next().map(|c| c.trim().parse::<usize>())) {
            (Some(item), Some(Ok(c))) => Some((item.trim().to_string(), c)),
            _ => None,
        };
        let (item, count) = parsed.ok_or_else(|| Error::Parse {
            line: n + 1,
            message: "expected item and non-negative count".into(),
        })?;
        out.insert(item, count);
    }
    Ok(out)
}

/// Re-ranks every non-empty candidate list for one grid point.
///
/// DM runs over the users with at least `n` candidates; the others keep
/// their plain top list. Its target is `target` (or the uniform target when
/// `None`) with every count multiplied by the point's scale and floored.
pub fn rerank_all(
    candidates: &[CandidateList],
    train: &Dataset,
    part: &PopularityPartition,
    point: &GridPoint,
    n: usize,
    target: Option<&BTreeMap<String, usize>>,
) -> Result<Vec<RankedList>> {
    let cfg = point.rerank_config(n);
    let cands: Vec<&CandidateList> = candidates.iter().filter(|c| !c.is_empty()).collect();
    if cands.len() < candidates.len() {
        warn!("{} users have no candidates", candidates.len() - cands.len());
    }
    match point.algorithm {
        Algorithm::None => cands.par_iter().map(|c| top_n(c, &cfg)).collect(),
        Algorithm::Cp => cands
            .par_iter()
            .map(|c| cp_rerank(c, &profile_distribution(&c.user, train, part)?, part, &cfg))
            .collect(),
        Algorithm::Xq => cands
            .par_iter()
            .map(|c| {
                let p = profile_distribution::<f64>(&c.user, train, part)?.head_longtail()?;
                xq_rerank(c, &p, part, &cfg)
            })
            .collect(),
        Algorithm::Fs => cands.par_iter().map(|c| fs_rerank(c, part, &cfg)).collect(),
        Algorithm::Dm => {
            let scale = match point.hyper {
                Hyper::Scale(s) => s,
                _ => 1.0,
            };
            let (full, short): (Vec<&CandidateList>, Vec<&CandidateList>) = cands.iter().partition(|c| c.len() >= n);
            if !short.is_empty() {
                warn!("{} users have fewer than {n} candidates and keep their top list", short.len());
            }
            let full: Vec<CandidateList> = full.into_iter().cloned().collect();
            let goal = match target {
                Some(t) => t
                    .iter()
                    .map(|(i, &c)| (i.clone(), (c as f64 * scale).floor() as usize))
                    .collect(),
                None => uniform_target(&full, n, scale),
            };
            let out = if full.is_empty() {
                Vec::new()
            } else {
                dm_rerank(&full, &goal, &cfg)?.lists
            };
            let mut rest: BTreeMap<&str, RankedList> = short
                .into_iter()
                .map(|c| top_n(c, &cfg).map(|l| (c.user.as_str(), l)))
                .collect::<Result<_>>()?;
            let mut full_lists = out.into_iter();
            Ok(cands
                .iter()
                .map(|c| match rest.remove(c.user.as_str()) {
                    Some(l) => l,
                    None => full_lists.next().expect("one DM list per full candidate list"),
                })
                .collect())
        }
    }
}

/// Outcome of one grid point.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub point: GridPoint,
    pub result: std::result::Result<MetricsReport<f64>, String>,
}

impl SweepEntry {
    pub fn report(&self) -> Option<&MetricsReport<f64>> {
        self.result.as_ref().ok()
    }
}

/// The grid point chosen for one algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPoint {
    /// Index into [`SweepResult::entries`].
    pub index: usize,
    pub precision: f64,
    /// `|precision - target|`.
    pub gap: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Base first, then the grid in [`ExperimentConfig::grid`] order.
    pub entries: Vec<SweepEntry>,
    pub target_precision: f64,
    pub matched: BTreeMap<Algorithm, MatchedPoint>,
    /// Directory holding every artifact of the run, when persisted.
    pub run_dir: Option<PathBuf>,
}

impl SweepResult {
    pub fn base(&self) -> &MetricsReport<f64> {
        self.entries[0].report().expect("base report")
    }

    pub fn failures(&self) -> impl Iterator<Item = (&GridPoint, &str)> {
        self.entries
            .iter()
            .filter_map(|e| e.result.as_ref().err().map(|m| (&e.point, m.as_str())))
    }
}

/// Per algorithm, the successful point whose precision is nearest `target`;
/// earlier grid points win ties. The base entry is never matched.
pub fn precision_match(entries: &[SweepEntry], target: f64, tol: f64) -> BTreeMap<Algorithm, MatchedPoint> {
    let mut out: BTreeMap<Algorithm, MatchedPoint> = BTreeMap::new();
    for (index, e) in entries.iter().enumerate() {
        let Some(r) = e.report() else { continue };
        if e.point.algorithm == Algorithm::None {
            continue;
        }
        let gap = (r.precision - target).abs();
        let better = out.get(&e.point.algorithm).is_none_or(|m| gap < m.gap);
        if better {
            out.insert(
                e.point.algorithm,
                MatchedPoint {
                    index,
                    precision: r.precision,
                    gap,
                    within_tolerance: gap <= tol,
                },
            );
        }
    }
    for (a, m) in &out {
        if !m.within_tolerance {
            warn!("{a}: nearest precision {:.4} is {:.4} from the target {target:.4}", m.precision, m.gap);
        }
    }
    out
}

fn write_point(dir: &Path, lists: &[RankedList], report: &MetricsReport<f64>) -> Result<()> {
    let mut f = artifacts::create(&dir.join("lists.tsv"))?;
    write_lists(lists, &mut f)?;
    f.flush()?;
    let mut f = artifacts::create(&dir.join("report.csv"))?;
    report.write_csv(&mut f)?;
    f.flush()?;
    let mut f = artifacts::create(&dir.join("exposure.csv"))?;
    report.write_exposure_csv(&mut f)?;
    f.flush()?;
    let mut f = artifacts::create(&dir.join("per_user.csv"))?;
    report.write_per_user_csv(&mut f)?;
    f.flush()?;
    Ok(())
}

fn persist_inputs(dir: &Path, cfg: &ExperimentConfig, prep: &Prepared) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let mut f = artifacts::create(&dir.join("data/train.tsv"))?;
    prep.train.write_tsv(&mut f)?;
    f.flush()?;
    let mut f = artifacts::create(&dir.join("data/test.tsv"))?;
    prep.test.write_tsv(&mut f)?;
    f.flush()?;
    if let Some(map) = &prep.supplier_map {
        let mut f = artifacts::create(&dir.join("data/suppliers.tsv"))?;
        map.write_tsv(&mut f)?;
        f.flush()?;
    }
    write_partitions(&dir.join("partition"), &prep.partitions)?;
    let mut f = artifacts::create(&dir.join("candidates.tsv"))?;
    write_candidates(&prep.candidates, &mut f)?;
    f.flush()?;
    Ok(())
}

fn run_point(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    point: &GridPoint,
    target: Option<&BTreeMap<String, usize>>,
    run_dir: Option<&Path>,
) -> Result<MetricsReport<f64>> {
    let lists = rerank_all(&prep.candidates, &prep.train, &prep.partitions.items, point, cfg.n, target)?;
    let report = evaluate(&prep.eval_context(cfg.n, cfg.min_rating), &RunOutput::new(lists.clone()))?;
    if let Some(dir) = run_dir {
        write_point(&dir.join("points").join(point.slug()), &lists, &report)?;
    }
    Ok(report)
}

/// Runs the base and every grid point. With `out`, all artifacts go to
/// `out/run-<config hash>/` along with the reports of [`emit_report`] and a
/// manifest of file digests. A failing grid point is recorded in its entry;
/// a failing base run aborts the sweep.
pub fn run_sweep(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<SweepResult> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    pool.install(|| sweep_in_pool(cfg, out))
}

fn sweep_in_pool(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<SweepResult> {
    let prep = prepare(cfg)?;
    let run_dir = out.map(|o| o.join(format!("run-{}", cfg.hash())));
    if let Some(dir) = &run_dir {
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        persist_inputs(dir, cfg, &prep)?;
    }
    let target = match &cfg.dm_target {
        Some(p) => Some(read_target(p)?),
        None => None,
    };

    let grid = cfg.grid();
    let entries: Vec<SweepEntry> = grid
        .par_iter()
        .map(|point| {
            let result = run_point(cfg, &prep, point, target.as_ref(), run_dir.as_deref());
            if let Err(e) = &result {
                warn!("{} {}: {e}", point.algorithm, point.label());
            }
            SweepEntry {
                point: *point,
                result: result.map_err(|e| e.to_string()),
            }
        })
        .collect();
    let base = entries[0]
        .report()
        .ok_or_else(|| Error::Infeasible(format!("base run failed: {}", entries[0].result.as_ref().unwrap_err())))?;
    let target_precision = cfg.target_precision.unwrap_or(base.precision - cfg.precision_offset);
    let matched = precision_match(&entries, target_precision, cfg.precision_tolerance);
    let sweep = SweepResult {
        entries,
        target_precision,
        matched,
        run_dir: run_dir.clone(),
    };
    if let Some(dir) = &run_dir {
        emit_report(&sweep, dir)?;
        write_manifest(dir)?;
    }
    Ok(sweep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            source: Source::Synthetic,
            synthetic_users: 60,
            synthetic_items: 80,
            synthetic_suppliers: 10,
            synthetic_min_profile: 10,
            synthetic_max_profile: 20,
            min_profile: 10,
            m: 30,
            n: 5,
            cp_lambdas: vec![0.0, 0.5, 0.9],
            xq_lambdas: vec![0.0, 0.5],
            fs_p: vec![0.5],
            fs_alpha: vec![0.1],
            dm_scales: vec![0.5],
            workers: 2,
            ..ExperimentConfig::default()
        }
    }

    fn entry(algorithm: Algorithm, l: f64, precision: Option<f64>, base: &MetricsReport<f64>) -> SweepEntry {
        SweepEntry {
            point: GridPoint {
                algorithm,
                hyper: Hyper::Lambda(l),
            },
            result: precision
                .map(|p| MetricsReport {
                    precision: p,
                    ..base.clone()
                })
                .ok_or_else(|| "failed".to_string()),
        }
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = small_config();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert!(ExperimentConfig::from_toml_str("no_such_key = 1").is_err());
    }

    #[test]
    fn validation_rejects_empty_grids_and_missing_files() {
        let mut cfg = small_config();
        cfg.cp_lambdas.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = small_config();
        cfg.algorithms = vec![Algorithm::Xq];
        cfg.cp_lambdas.clear();
        assert!(cfg.validate().is_ok());
        let mut cfg = small_config();
        cfg.dm_target = Some("/nonexistent/target.tsv".into());
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::default();
        assert!(cfg.validate().is_err(), "file source without ratings");
    }

    #[test]
    fn grid_lists_base_then_points() {
        let g = small_config().grid();
        assert_eq!(g.len(), 1 + 3 + 2 + 1 + 1);
        assert_eq!(g[0], GridPoint::base());
        assert_eq!(g[1].label(), "lambda=0");
        let fs = g.iter().find(|p| p.algorithm == Algorithm::Fs).unwrap();
        assert_eq!(fs.label(), "p=0.5 alpha=0.1");
        assert_eq!(fs.slug(), "fs_p=0.5_alpha=0.1");
    }

    #[test]
    fn nearest_precision_is_chosen() {
        let sweep = run_sweep(
            &ExperimentConfig {
                algorithms: vec![Algorithm::Cp],
                cp_lambdas: vec![0.0],
                ..small_config()
            },
            None,
        )
        .unwrap();
        let base = sweep.base().clone();
        let entries = vec![
            entry(Algorithm::Cp, 0.1, Some(0.22), &base),
            entry(Algorithm::Cp, 0.2, Some(0.208), &base),
            entry(Algorithm::Cp, 0.3, Some(0.19), &base),
            entry(Algorithm::Cp, 0.4, None, &base),
            entry(Algorithm::Xq, 0.1, Some(0.5), &base),
        ];
        let m = precision_match(&entries, 0.21, 0.005);
        assert_eq!(m[&Algorithm::Cp].index, 1);
        assert!(m[&Algorithm::Cp].within_tolerance);
        assert_eq!(m[&Algorithm::Xq].index, 4);
        assert!(!m[&Algorithm::Xq].within_tolerance);
    }

    #[test]
    fn lambda_zero_reports_equal_base() {
        let sweep = run_sweep(
            &ExperimentConfig {
                algorithms: vec![Algorithm::Cp, Algorithm::Xq],
                cp_lambdas: vec![0.0],
                xq_lambdas: vec![0.0],
                ..small_config()
            },
            None,
        )
        .unwrap();
        let base = sweep.base();
        for e in &sweep.entries[1..] {
            let r = e.report().unwrap();
            assert_eq!(r.row(), base.row());
            assert_eq!(r.exposure, base.exposure);
        }
    }

    #[test]
    fn failing_point_is_recorded_and_others_continue() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("target.tsv");
        // far more exposure than there are slots
        fs::write(&target, "i00000\t1000000\n").unwrap();
        let cfg = ExperimentConfig {
            algorithms: vec![Algorithm::Cp, Algorithm::Dm],
            cp_lambdas: vec![0.5],
            dm_scales: vec![1.0],
            dm_target: Some(target),
            ..small_config()
        };
        let sweep = run_sweep(&cfg, None).unwrap();
        let failures: Vec<_> = sweep.failures().collect();
        assert_eq!(failures.len(), 1);
        assert_eq!(failures[0].0.algorithm, Algorithm::Dm);
        assert!(sweep.matched.contains_key(&Algorithm::Cp));
        assert!(!sweep.matched.contains_key(&Algorithm::Dm));
    }

    #[test]
    fn run_directory_is_deterministic_and_complete() {
        let cfg = small_config();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = run_sweep(&cfg, Some(a.path())).unwrap();
        let rb = run_sweep(&cfg, Some(b.path())).unwrap();
        let (da, db) = (ra.run_dir.unwrap(), rb.run_dir.unwrap());
        assert_eq!(da.file_name(), db.file_name());
        for f in ["table1.csv", "groups.csv", "exposure.csv", "sweep.csv", "MANIFEST.tsv", "config.toml"] {
            let x = fs::read(da.join(f)).unwrap();
            assert_eq!(x, fs::read(db.join(f)).unwrap(), "{f}");
        }
        for f in ["data/train.tsv", "partition/items.tsv", "candidates.tsv", "points/cp_lambda=0.5/lists.tsv"] {
            assert!(da.join(f).is_file(), "{f}");
        }
    }

    #[test]
    fn synthetic_lambda_sweep_lowers_user_deviation() {
        let sweep = run_sweep(
            &ExperimentConfig {
                algorithms: vec![Algorithm::Cp],
                ..small_config()
            },
            None,
        )
        .unwrap();
        let upd = |k: usize| sweep.entries[k].report().unwrap().upd.average;
        assert!(upd(3) <= upd(1), "{} vs {}", upd(3), upd(1));
    }
}
