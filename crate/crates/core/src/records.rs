//! Tray-level inputs: metadata rows and ground-truth counts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One specimen's metadata row, columns in their original order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataRecord {
    columns: Vec<(String, String)>,
}

impl MetadataRecord {
    pub fn new(columns: Vec<(String, String)>) -> Self {
        MetadataRecord { columns }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(k, _)| k.as_str())
    }

    pub fn values(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(_, v)| v.as_str())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.columns
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for MetadataRecord {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        MetadataRecord::new(
            iter.into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrayRecord {
    pub tray_id: String,
    pub image_path: String,
    pub ground_truth_count: Option<usize>,
    pub metadata_rows: Vec<MetadataRecord>,
}

impl TrayRecord {
    pub fn new(tray_id: impl Into<String>, image_path: impl Into<String>) -> Self {
        TrayRecord {
            tray_id: tray_id.into(),
            image_path: image_path.into(),
            ground_truth_count: None,
            metadata_rows: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(first) = self.metadata_rows.first() {
            let keys: Vec<&str> = first.keys().collect();
            if let Some(bad) = self
                .metadata_rows
                .iter()
                .position(|r| !r.keys().eq(keys.iter().copied()))
            {
                return Err(Error::input(format!(
                    "tray {}: metadata row {bad} has a different column set",
                    self.tray_id
                )));
            }
            if let Some(gt) = self.ground_truth_count {
                if gt != self.metadata_rows.len() {
                    return Err(Error::input(format!(
                        "tray {}: ground truth count {gt} disagrees with {} metadata rows",
                        self.tray_id,
                        self.metadata_rows.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::config(format!("cannot read {}: {e}", path.display())),
        _ => Error::Csv(e),
    })?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(str::to_owned).collect());
    }
    Ok((headers, rows))
}

/// Loads every row of a per-tray metadata CSV.
pub fn load_tray_metadata(path: &Path) -> Result<Vec<MetadataRecord>> {
    let (headers, rows) = read_csv(path)?;
    Ok(rows
        .into_iter()
        .map(|row| headers.iter().cloned().zip(row).collect())
        .collect())
}

/// Partitions a master CSV by its `tray_id` column; the key column is dropped
/// from the records, row order within each tray is kept.
pub fn load_master_metadata(path: &Path) -> Result<BTreeMap<String, Vec<MetadataRecord>>> {
    let (headers, rows) = read_csv(path)?;
    let key = headers.iter().position(|h| h == "tray_id").ok_or_else(|| {
        Error::config(format!(
            "{}: master metadata CSV has no tray_id column",
            path.display()
        ))
    })?;
    let mut out: BTreeMap<String, Vec<MetadataRecord>> = BTreeMap::new();
    for row in rows {
        let tray = row[key].clone();
        let rec = headers
            .iter()
            .zip(row)
            .enumerate()
            .filter(|(i, _)| *i != key)
            .map(|(_, (h, v))| (h.clone(), v))
            .collect();
        out.entry(tray).or_default().push(rec);
    }
    Ok(out)
}

/// Metadata source: a directory of `<tray_id>.csv` files or one master CSV.
#[derive(Debug, Clone)]
pub enum MetadataSource {
    PerTray(std::path::PathBuf),
    Master(BTreeMap<String, Vec<MetadataRecord>>),
}

impl MetadataSource {
    pub fn open(path: &Path) -> Result<Self> {
        if path.is_dir() {
            Ok(MetadataSource::PerTray(path.to_path_buf()))
        } else {
            Ok(MetadataSource::Master(load_master_metadata(path)?))
        }
    }

    /// Rows for one tray; a tray with no rows in the source yields an empty list.
    pub fn rows_for(&self, tray_id: &str) -> Result<Vec<MetadataRecord>> {
        match self {
            MetadataSource::PerTray(dir) => {
                let p = dir.join(format!("{tray_id}.csv"));
                if p.exists() {
                    load_tray_metadata(&p)
                } else {
                    Ok(Vec::new())
                }
            }
            MetadataSource::Master(map) => Ok(map.get(tray_id).cloned().unwrap_or_default()),
        }
    }
}

/// Reads `tray_id,ground_truth_count` pairs.
pub fn load_ground_truth(path: &Path) -> Result<BTreeMap<String, usize>> {
    let (headers, rows) = read_csv(path)?;
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::input(format!("{}: missing column {name}", path.display())))
    };
    let (id, count) = (col("tray_id")?, col("ground_truth_count")?);
    rows.into_iter()
        .map(|r| {
            let n = r[count].trim().parse::<usize>().map_err(|_| {
                Error::input(format!(
                    "{}: bad count {:?} for tray {}",
                    path.display(),
                    r[count],
                    r[id]
                ))
            })?;
            Ok((r[id].clone(), n))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn master_csv_partitions_by_tray() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "species,tray_id,site\nA,t1,x\nB,t2,y\nC,t1,\"z,w\"").unwrap();
        let m = load_master_metadata(f.path()).unwrap();
        assert_eq!(m["t1"].len(), 2);
        assert_eq!(m["t1"][1].get("site"), Some("z,w"));
        assert_eq!(m["t1"][0].keys().collect::<Vec<_>>(), ["species", "site"]);
        assert_eq!(m["t2"][0].get("species"), Some("B"));
    }

    #[test]
    fn tray_record_checks_consistency() {
        let mut t = TrayRecord::new("t", "t.png");
        t.metadata_rows = vec![
            [("a", "1")].into_iter().collect(),
            [("a", "2")].into_iter().collect(),
        ];
        t.ground_truth_count = Some(2);
        assert!(t.validate().is_ok());
        t.ground_truth_count = Some(3);
        assert!(t.validate().is_err());
        t.ground_truth_count = None;
        t.metadata_rows.push([("b", "3")].into_iter().collect());
        assert!(t.validate().is_err());
    }
}
