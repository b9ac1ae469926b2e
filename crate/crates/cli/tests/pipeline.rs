use std::fs;
use std::path::Path;
use std::process::Command;

fn popcal(args: &[&str], cwd: &Path) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_popcal"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn popcal");
    assert!(
        out.status.success(),
        "popcal {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, rel: &str) -> String {
    fs::read_to_string(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

fn prepare(dir: &Path) {
    popcal(&["generate", "--users", "60", "--items", "50", "--suppliers", "10", "--out", "raw"], dir);
    popcal(
        &[
            "ingest", "--ratings", "raw/ratings.tsv", "--delim", "tab", "--suppliers", "raw/suppliers.tsv",
            "--min-profile", "10", "--out", "data",
        ],
        dir,
    );
    popcal(
        &["partition", "--train", "data/train.tsv", "--suppliers", "data/suppliers.tsv", "--out", "part"],
        dir,
    );
    popcal(&["recommend", "--train", "data/train.tsv", "--m", "20", "--out", "cands.tsv"], dir);
}

#[test]
fn stages_chain_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);

    let shares = read(dir, "part/shares.tsv");
    assert_eq!(shares.lines().next().unwrap(), "stakeholder\tgroup\tsize\tshare");
    assert_eq!(shares.lines().count(), 10);
    let train_users = read(dir, "data/train.tsv")
        .lines()
        .map(|l| l.split('\t').next().unwrap().to_string())
        .collect::<std::collections::BTreeSet<_>>();
    assert_eq!(read(dir, "part/users.tsv").lines().count(), train_users.len());

    for algo in ["none", "cp", "xq", "fs", "dm"] {
        let lists = format!("{algo}/lists.tsv");
        let report = format!("{algo}/report.csv");
        popcal(
            &[
                "rerank", "--algo", algo, "--lambda", "0.5", "--n", "5", "--candidates", "cands.tsv", "--train",
                "data/train.tsv", "--partition", "part", "--out", &lists,
            ],
            dir,
        );
        let text = read(dir, &lists);
        let mut per_user = std::collections::BTreeMap::<&str, usize>::new();
        for line in text.lines() {
            let cols: Vec<&str> = line.split('\t').collect();
            assert_eq!(cols.len(), 3, "{line}");
            *per_user.entry(cols[0]).or_default() += 1;
        }
        assert!(per_user.values().all(|&c| c <= 5), "{algo}");

        popcal(
            &[
                "evaluate", "--lists", &lists, "--train", "data/train.tsv", "--test", "data/test.tsv",
                "--partition", "part", "--suppliers", "data/suppliers.tsv", "--n", "5", "--out", &report,
            ],
            dir,
        );
        let csv = read(dir, &report);
        let mut lines = csv.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let values: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(&header[..8], ["precision", "Agg-Div", "LC", "Gini", "ESF", "IPD", "UPD", "SPD"]);
        assert_eq!(header.len(), values.len());
        assert!(values.iter().all(|v| v.parse::<f64>().is_ok()), "{algo}: {values:?}");
        assert!(dir.join(algo).join("exposure.csv").exists());
        assert!(dir.join(algo).join("per_user.csv").exists());
    }

    // lambda = 0 reproduces the plain top-n
    popcal(
        &[
            "rerank", "--algo", "cp", "--lambda", "0", "--n", "5", "--candidates", "cands.tsv", "--train",
            "data/train.tsv", "--partition", "part", "--out", "cp0.tsv",
        ],
        dir,
    );
    assert_eq!(read(dir, "cp0.tsv"), read(dir, "none/lists.tsv"));
}

#[test]
fn experiment_writes_a_complete_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("sweep.toml"),
        "source = \"synthetic\"\n\
         synthetic_users = 40\nsynthetic_items = 50\nsynthetic_suppliers = 8\n\
         synthetic_min_profile = 10\nsynthetic_max_profile = 15\nmin_profile = 10\n\
         m = 20\nn = 5\nalgorithms = [\"cp\", \"fs\"]\ncp_lambdas = [0.0, 0.5]\n\
         fs_p = [0.5]\nfs_alpha = [0.1]\n",
    )
    .unwrap();
    let stdout = popcal(&["experiment", "--config", "sweep.toml", "--out", "runs"], dir);
    let run = fs::read_dir(dir.join("runs")).unwrap().next().unwrap().unwrap().path();
    assert!(stdout.contains("run directory"));
    for f in ["config.toml", "table1.csv", "groups.csv", "sweep.csv", "matched.csv", "exposure.csv", "MANIFEST.tsv"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let table = fs::read_to_string(run.join("table1.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 1 + 2);
    assert!(run.join("points/cp_lambda=0.5/lists.tsv").exists());
}

#[test]
fn bad_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "source = \"synthetic\"\nlamda = 0.5\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_popcal"))
        .args(["experiment", "--config", "bad.toml", "--out", "runs"])
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("lamda"));
}
