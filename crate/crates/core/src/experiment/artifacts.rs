//! On-disk layout of partition directories and run manifests.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::data::{Dataset, SupplierMap};
use crate::error::Result;
use crate::partition::{
    item_counts, read_assignment, supplier_counts, GroupLabel, Partition, PopularityPartition, SupplierPartition,
    UserGroups,
};

pub const ITEMS_FILE: &str = "items.tsv";
pub const USERS_FILE: &str = "users.tsv";
pub const SUPPLIERS_FILE: &str = "suppliers.tsv";
pub const SHARES_FILE: &str = "shares.tsv";

/// The three stakeholder partitions of one train split.
#[derive(Debug, Clone)]
pub struct Partitions {
    pub items: PopularityPartition,
    pub users: UserGroups,
    pub suppliers: Option<SupplierPartition>,
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_shares<L: GroupLabel, W: Write>(out: &mut W, stakeholder: &str, part: &Partition<L>) -> Result<()> {
    let sizes = part.sizes();
    let shares = part.rating_share();
    for g in L::ALL {
        writeln!(out, "{stakeholder}\t{g}\t{}\t{:.6}", sizes[g.index()], shares[g.index()])?;
    }
    Ok(())
}

/// Writes `items.tsv`, `users.tsv`, optionally `suppliers.tsv`, and
/// `shares.tsv` with `stakeholder, group, size, share` rows. Item and supplier
/// shares are shares of train ratings, user shares are shares of users.
pub fn write_partitions(dir: &Path, p: &Partitions) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = create(&dir.join(ITEMS_FILE))?;
    p.items.write_tsv(&mut f)?;
    f.flush()?;
    let mut f = create(&dir.join(USERS_FILE))?;
    p.users.write_tsv(&mut f)?;
    f.flush()?;

    let mut shares = create(&dir.join(SHARES_FILE))?;
    writeln!(shares, "stakeholder\tgroup\tsize\tshare")?;
    write_shares(&mut shares, "items", &p.items)?;
    let total = p.users.len().max(1) as f64;
    for (g, size) in crate::partition::UserGroup::ALL.iter().zip(p.users.sizes()) {
        writeln!(shares, "users\t{g}\t{size}\t{:.6}", size as f64 / total)?;
    }
    if let Some(s) = &p.suppliers {
        let mut f = create(&dir.join(SUPPLIERS_FILE))?;
        s.write_tsv(&mut f)?;
        f.flush()?;
        write_shares(&mut shares, "suppliers", s)?;
    }
    shares.flush()?;
    Ok(())
}

/// Reads a directory written by [`write_partitions`]. Rating shares are
/// recomputed from `train`; supplier groups are read only when a supplier
/// map is given and `suppliers.tsv` exists.
pub fn read_partitions(dir: &Path, train: &Dataset, map: Option<&SupplierMap>) -> Result<Partitions> {
    let items = Partition::from_assignment(read_assignment(File::open(dir.join(ITEMS_FILE))?)?, &item_counts(train))?;
    let users = UserGroups::from_assignment(read_assignment(File::open(dir.join(USERS_FILE))?)?);
    let suppliers = match map {
        Some(map) if dir.join(SUPPLIERS_FILE).exists() => Some(Partition::from_assignment(
            read_assignment(File::open(dir.join(SUPPLIERS_FILE))?)?,
            &supplier_counts(train, map)?,
        )?),
        _ => None,
    };
    Ok(Partitions {
        items,
        users,
        suppliers,
    })
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if let Ok(rel) = path.strip_prefix(root) {
            out.push(rel.to_path_buf());
        }
    }
    Ok(())
}

/// Writes `MANIFEST.tsv` listing every file under `root` with its size and
/// SHA-256, preceded by the library version.
pub fn write_manifest(root: &Path) -> Result<()> {
    let mut files = Vec::new();
    collect_files(root, root, &mut files)?;
    files.retain(|p| p != Path::new("MANIFEST.tsv"));
    files.sort();
    let mut out = create(&root.join("MANIFEST.tsv"))?;
    writeln!(out, "# popcal {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "path\tbytes\tsha256")?;
    for rel in files {
        let bytes = fs::read(root.join(&rel))?;
        let name = rel.to_string_lossy().replace('\\', "/");
        writeln!(out, "{name}\t{}\t{}", bytes.len(), sha256_hex(&bytes))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{partition_items, partition_suppliers, partition_users};

    #[test]
    fn partition_round_trip() {
        let train = Dataset::from_triples(
            [
                ("u1", "a", 5.0),
                ("u1", "b", 3.0),
                ("u2", "a", 4.0),
                ("u2", "c", 2.0),
                ("u3", "a", 1.0),
                ("u3", "d", 2.0),
                ("u4", "b", 3.0),
            ]
            .map(|(u, i, r)| (u.to_string(), i.to_string(), r)),
        )
        .unwrap();
        let map = SupplierMap::from_pairs([("a", "x"), ("b", "y"), ("c", "z"), ("d", "z")]).unwrap();
        let items = partition_items(&train, 0.2, 0.2).unwrap();
        let p = Partitions {
            users: partition_users(&train, &items).unwrap(),
            suppliers: Some(partition_suppliers(&train, &map, 0.2, 0.2).unwrap()),
            items,
        };
        let dir = tempfile::tempdir().unwrap();
        write_partitions(dir.path(), &p).unwrap();
        let back = read_partitions(dir.path(), &train, Some(&map)).unwrap();
        for i in ["a", "b", "c", "d"] {
            assert_eq!(back.items.group(i), p.items.group(i));
        }
        assert_eq!(back.items.rating_share(), p.items.rating_share());
        for u in ["u1", "u2", "u3", "u4"] {
            assert_eq!(back.users.group(u), p.users.group(u));
        }
        let s = back.suppliers.unwrap();
        for x in ["x", "y", "z"] {
            assert_eq!(s.group(x), p.suppliers.as_ref().unwrap().group(x));
        }
        let shares = fs::read_to_string(dir.path().join(SHARES_FILE)).unwrap();
        assert_eq!(shares.lines().count(), 10);
    }

    #[test]
    fn manifest_lists_files_with_digests() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("sub")).unwrap();
        fs::write(dir.path().join("sub/a.txt"), b"abc").unwrap();
        write_manifest(dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("MANIFEST.tsv")).unwrap();
        assert!(text.contains("sub/a.txt\t3\tba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"));
    }
}
