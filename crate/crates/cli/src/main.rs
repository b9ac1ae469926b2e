use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use popcal::data::{load_ratings, parse_delimiter, parse_supplier_map, Dataset, RatingFormat, SupplierMap};
use popcal::experiment::{
    generate, ingest, read_partitions, read_target, rerank_all, run_sweep, write_partitions,
    ExperimentConfig, GridPoint, Hyper, Partitions, SyntheticSpec,
};
use popcal::knn::{fit, read_candidates, recommend_all, write_candidates, Aggregation, KnnParams};
use popcal::metrics::{catalog_size, evaluate, EvalContext, RunOutput};
use popcal::partition::{partition_items, partition_suppliers, partition_users};
use popcal::rerank::{read_lists, write_lists, Algorithm};
use popcal::Report;

#[derive(Parser)]
#[command(name = "popcal", version, about = "Popularity-calibrated re-ranking and multistakeholder evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load, convert and filter ratings, then write train.tsv and test.tsv.
    Ingest {
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long, default_value = "explicit")]
        format: RatingFormat,
        /// Field delimiter; "tab" or "\t" for a tab.
        #[arg(long, default_value = "::")]
        delim: String,
        /// `item<delim>supplier` rows; items without a supplier are dropped.
        #[arg(long)]
        suppliers: Option<PathBuf>,
        #[arg(long, default_value = "tab")]
        supplier_delim: String,
        #[arg(long, default_value_t = 20)]
        min_profile: usize,
        #[arg(long, default_value_t = 0.8)]
        split: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write item, user and supplier group assignments plus a shares summary.
    Partition {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        suppliers: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        head: f64,
        #[arg(long, default_value_t = 0.2)]
        tail: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit item-based CF and write top-m candidates per user.
    Recommend {
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value_t = 100)]
        m: usize,
        #[arg(long, default_value_t = 40)]
        k: usize,
        #[arg(long, default_value_t = 10.0)]
        shrink: f64,
        #[arg(long, default_value = "weighted_average")]
        aggregation: Aggregation,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-rank candidate lists into final top-n lists.
    Rerank {
        #[arg(long)]
        algo: Algorithm,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        fs_p: f64,
        #[arg(long, default_value_t = 0.1)]
        fs_alpha: f64,
        /// `item<TAB>count` exposure target for DM; uniform when absent.
        #[arg(long)]
        dm_target: Option<PathBuf>,
        /// Multiplier on the DM target.
        #[arg(long, default_value_t = 1.0)]
        dm_scale: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the metric suite for a set of final lists.
    Evaluate {
        #[arg(long)]
        lists: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        #[arg(long)]
        suppliers: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Only test ratings at or above this value count as relevant.
        #[arg(long)]
        min_rating: Option<f64>,
        /// report.csv; exposure.csv and per_user.csv go next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full sweep from a TOML config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic ratings.tsv and suppliers.tsv.
    Generate {
        #[arg(long, default_value_t = 500)]
        users: usize,
        #[arg(long, default_value_t = 300)]
        items: usize,
        #[arg(long, default_value_t = 60)]
        suppliers: usize,
        #[arg(long, default_value_t = 1.5)]
        exponent: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    Dataset::read_tsv(path).with_context(|| format!("reading {}", path.display()))
}

fn read_suppliers(path: &Path, delim: &str) -> Result<SupplierMap> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(parse_supplier_map(f, &parse_delimiter(delim))?)
}

fn save<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> popcal::Result<()>,
{
    let mut w = writer(path)?;
    write(&mut w)?;
    w.flush()?;
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest {
            ratings,
            format,
            delim,
            suppliers,
            supplier_delim,
            min_profile,
            split,
            seed,
            out,
        } => {
            let rows = load_ratings(&ratings, &parse_delimiter(&delim))
                .with_context(|| format!("reading {}", ratings.display()))?;
            let map = suppliers.map(|p| read_suppliers(&p, &supplier_delim)).transpose()?;
            let (parts, map) = ingest(&rows, format, map.as_ref(), min_profile, split, seed)?;
            save(&out.join("train.tsv"), |w| parts.train.write_tsv(w))?;
            match &parts.test {
                Some(test) => save(&out.join("test.tsv"), |w| test.write_tsv(w))?,
                None => bail!("the split left no test ratings"),
            }
            if let Some(map) = &map {
                save(&out.join("suppliers.tsv"), |w| map.write_tsv(w))?;
            }
            info!(
                "{} users, {} items, {} train ratings",
                parts.train.num_users(),
                parts.train.num_items(),
                parts.train.num_ratings()
            );
        }
        Command::Partition {
            train,
            suppliers,
            head,
            tail,
            out,
        } => {
            let train = read_dataset(&train)?;
            let items = partition_items(&train, head, tail)?;
            let users = partition_users(&train, &items)?;
            let suppliers = match suppliers {
                Some(p) => Some(partition_suppliers(&train, &read_suppliers(&p, "tab")?, head, tail)?),
                None => None,
            };
            write_partitions(
                &out,
                &Partitions {
                    items,
                    users,
                    suppliers,
                },
            )?;
        }
        Command::Recommend {
            train,
            m,
            k,
            shrink,
            aggregation,
            out,
        } => {
            let train = read_dataset(&train)?;
            let model = fit(
                &train,
                KnnParams {
                    k,
                    shrinkage: shrink,
                    aggregation,
                },
            )?;
            let lists = recommend_all(&model, &train, m)?;
            save(&out, |w| write_candidates(&lists, w))?;
        }
        Command::Rerank {
            algo,
            candidates,
            train,
            partition,
            lambda,
            n,
            fs_p,
            fs_alpha,
            dm_target,
            dm_scale,
            out,
        } => {
            let train = read_dataset(&train)?;
            let parts = read_partitions(&partition, &train, None)?;
            let f = File::open(&candidates).with_context(|| format!("opening {}", candidates.display()))?;
            let cands = read_candidates(f)?;
            let hyper = match algo {
                Algorithm::None => Hyper::None,
                Algorithm::Cp | Algorithm::Xq => Hyper::Lambda(lambda),
                Algorithm::Fs => Hyper::Fair { p: fs_p, alpha: fs_alpha },
                Algorithm::Dm => Hyper::Scale(dm_scale),
            };
            let target = dm_target.map(|p| read_target(&p)).transpose()?;
            let point = GridPoint { algorithm: algo, hyper };
            let lists = rerank_all(&cands, &train, &parts.items, &point, n, target.as_ref())?;
            save(&out, |w| write_lists(&lists, w))?;
        }
        Command::Evaluate {
            lists,
            train,
            test,
            partition,
            suppliers,
            n,
            min_rating,
            out,
        } => {
            let train = read_dataset(&train)?;
            let test = read_dataset(&test)?;
            let map = suppliers.map(|p| read_suppliers(&p, "tab")).transpose()?;
            let parts = read_partitions(&partition, &train, map.as_ref())?;
            if map.is_some() && parts.suppliers.is_none() {
                bail!("{} has no suppliers.tsv", partition.display());
            }
            let f = File::open(&lists).with_context(|| format!("opening {}", lists.display()))?;
            let run = RunOutput::new(read_lists(f)?);
            let ctx = EvalContext {
                train: &train,
                test: &test,
                catalog_size: catalog_size(&train, &test),
                n,
                min_rating,
                items: &parts.items,
                users: &parts.users,
                suppliers: map.as_ref().zip(parts.suppliers.as_ref()),
            };
            let report: Report = evaluate(&ctx, &run)?;
            let dir = out.parent().unwrap_or_else(|| Path::new(""));
            save(&out, |w| report.write_csv(w))?;
            save(&dir.join("exposure.csv"), |w| report.write_exposure_csv(w))?;
            save(&dir.join("per_user.csv"), |w| report.write_per_user_csv(w))?;
        }
        Command::Experiment { config, out } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let sweep = run_sweep(&cfg, Some(&out))?;
            let dir = sweep.run_dir.clone().expect("persisted run");
            for (point, err) in sweep.failures() {
                log::warn!("{} {} failed: {err}", point.algorithm, point.label());
            }
            for (a, m) in &sweep.matched {
                println!(
                    "{a}: {} precision {:.4} (target {:.4}{})",
                    sweep.entries[m.index].point.label(),
                    m.precision,
                    sweep.target_precision,
                    if m.within_tolerance { "" } else { ", outside tolerance" }
                );
            }
            println!("run directory: {}", dir.display());
        }
        Command::Generate {
            users,
            items,
            suppliers,
            exponent,
            seed,
            out,
        } => {
            let (data, map) = generate(&SyntheticSpec {
                users,
                items,
                suppliers,
                exponent,
                seed,
                ..SyntheticSpec::default()
            })?;
            save(&out.join("ratings.tsv"), |w| data.write_tsv(w))?;
            save(&out.join("suppliers.tsv"), |w| map.write_tsv(w))?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    run(Cli::parse().command)
}
