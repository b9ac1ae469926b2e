//! Plot-ready CSV reports of a sweep.

use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::metrics::{MetricsReport, REPORT_COLUMNS};
use crate::partition::{GroupLabel, ItemGroup, SupplierGroup, UserGroup};

use super::artifacts::create;
use super::{SweepEntry, SweepResult};

/// Header of `table1.csv`.
pub const TABLE1_COLUMNS: [&str; 10] = [
    "algorithm", "hyperparameter", "precision", "Agg-Div", "LC", "Gini", "ESF", "IPD", "UPD", "SPD",
];
pub const GROUPS_HEADER: &str = "algorithm,hyperparameter,stakeholder,group,deviation";
pub const SWEEP_HEADER: &str = "algorithm,hyperparameter,metric,value";
pub const MATCHED_HEADER: &str = "algorithm,hyperparameter,precision,target,gap,within_tolerance";
pub const EXPOSURE_HEADER: &str = "algorithm,hyperparameter,item,train_count,group,exposure";

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

fn opt6(x: Option<f64>) -> String {
    x.map(f6).unwrap_or_default()
}

/// Base first, then each matched point in algorithm order.
fn table_entries(sweep: &SweepResult) -> Vec<(&SweepEntry, &MetricsReport<f64>)> {
    let mut out = vec![(&sweep.entries[0], sweep.base())];
    for m in sweep.matched.values() {
        let e = &sweep.entries[m.index];
        if let Some(r) = e.report() {
            out.push((e, r));
        }
    }
    out
}

fn group_rows<L: GroupLabel>(stakeholder: &str, values: &[f64; 3]) -> Vec<String> {
    L::ALL
        .iter()
        .map(|g| format!("{stakeholder},{g},{}", f6(values[g.index()])))
        .collect()
}

/// Writes `table1.csv`, `groups.csv`, `exposure.csv`, `matched.csv` and
/// `sweep.csv` into `dir`.
///
/// The first three cover the base run and the precision-matched point of
/// every algorithm; `sweep.csv` has one row per successful grid point and
/// metric of [`REPORT_COLUMNS`]. Supplier values are empty without a
/// supplier map.
pub fn emit_report(sweep: &SweepResult, dir: &Path) -> Result<()> {
    let rows = table_entries(sweep);

    let mut t = create(&dir.join("table1.csv"))?;
    writeln!(t, "{}", TABLE1_COLUMNS.join(","))?;
    for (e, r) in &rows {
        writeln!(
            t,
            "{},{},{},{},{},{},{},{},{},{}",
            e.point.algorithm,
            e.point.label(),
            f6(r.precision),
            f6(r.agg_div),
            f6(r.lc),
            f6(r.gini),
            opt6(r.esf),
            f6(r.ipd.average),
            f6(r.upd.average),
            opt6(r.spd.map(|d| d.average)),
        )?;
    }
    t.flush()?;

    let mut g = create(&dir.join("groups.csv"))?;
    writeln!(g, "{GROUPS_HEADER}")?;
    for (e, r) in &rows {
        let prefix = format!("{},{}", e.point.algorithm, e.point.label());
        let mut lines: Vec<String> = group_rows::<ItemGroup>("items", &r.ipd.per_group);
        lines.extend(group_rows::<UserGroup>("users", &r.upd.per_group));
        if let Some(spd) = &r.spd {
            lines.extend(group_rows::<SupplierGroup>("suppliers", &spd.per_group));
        }
        for l in lines {
            writeln!(g, "{prefix},{l}")?;
        }
    }
    g.flush()?;

    let mut x = create(&dir.join("exposure.csv"))?;
    writeln!(x, "{EXPOSURE_HEADER}")?;
    for (e, r) in &rows {
        for row in &r.exposure {
            writeln!(
                x,
                "{},{},{},{},{},{}",
                e.point.algorithm,
                e.point.label(),
                row.item,
                row.train_count,
                row.group,
                f6(row.exposure)
            )?;
        }
    }
    x.flush()?;

    let mut m = create(&dir.join("matched.csv"))?;
    writeln!(m, "{MATCHED_HEADER}")?;
    for (a, p) in &sweep.matched {
        writeln!(
            m,
            "{a},{},{},{},{},{}",
            sweep.entries[p.index].point.label(),
            f6(p.precision),
            f6(sweep.target_precision),
            f6(p.gap),
            p.within_tolerance
        )?;
    }
    m.flush()?;

    let mut s = create(&dir.join("sweep.csv"))?;
    writeln!(s, "{SWEEP_HEADER}")?;
    for e in &sweep.entries {
        let Some(r) = e.report() else { continue };
        for (metric, value) in REPORT_COLUMNS.iter().zip(r.row()) {
            writeln!(s, "{},{},{metric},{value}", e.point.algorithm, e.point.label())?;
        }
    }
    s.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::fs;

    use super::super::{run_sweep, ExperimentConfig, Source};
    use super::*;
    use crate::rerank::Algorithm;

    fn config(algorithms: Vec<Algorithm>, lambdas: Vec<f64>) -> ExperimentConfig {
        ExperimentConfig {
            source: Source::Synthetic,
            synthetic_users: 40,
            synthetic_items: 60,
            synthetic_suppliers: 8,
            synthetic_min_profile: 10,
            synthetic_max_profile: 15,
            min_profile: 10,
            m: 20,
            n: 5,
            algorithms,
            cp_lambdas: lambdas.clone(),
            xq_lambdas: lambdas,
            fs_p: vec![0.5, 0.75],
            fs_alpha: vec![0.1],
            dm_scales: vec![0.5],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn one_algorithm_one_point_gives_two_table_rows() {
        let sweep = run_sweep(&config(vec![Algorithm::Cp], vec![0.5]), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&sweep, dir.path()).unwrap();
        let table = fs::read_to_string(dir.path().join("table1.csv")).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "algorithm,hyperparameter,precision,Agg-Div,LC,Gini,ESF,IPD,UPD,SPD");
        assert!(lines[1].starts_with("base,-,"));
        assert!(lines[2].starts_with("cp,lambda=0.5,"));
        assert!(lines.iter().all(|l| l.split(',').count() == 10));
    }

    #[test]
    fn sweep_has_one_row_per_point_and_metric() {
        let all = vec![Algorithm::Cp, Algorithm::Xq, Algorithm::Fs, Algorithm::Dm];
        let sweep = run_sweep(&config(all, vec![0.0, 0.5]), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&sweep, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        let points = 1 + 2 + 2 + 2 + 1;
        assert_eq!(sweep.entries.len(), points);
        assert_eq!(text.lines().count(), 1 + points * REPORT_COLUMNS.len());
        assert_eq!(text.lines().next().unwrap(), SWEEP_HEADER);

        let groups = fs::read_to_string(dir.path().join("groups.csv")).unwrap();
        // base + 4 matched, 9 group rows each
        assert_eq!(groups.lines().count(), 1 + 5 * 9);
        let exposure = fs::read_to_string(dir.path().join("exposure.csv")).unwrap();
        assert_eq!(exposure.lines().next().unwrap(), EXPOSURE_HEADER);
        let matched = fs::read_to_string(dir.path().join("matched.csv")).unwrap();
        assert_eq!(matched.lines().count(), 5);
    }
}
