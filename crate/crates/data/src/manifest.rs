use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use log::warn;

use crate::error::{DataError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "dev" => Some(Split::Dev),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    /// Resolved against the manifest's directory.
    pub path: PathBuf,
    pub label: String,
    pub class: usize,
    pub split: Option<Split>,
    pub fold: Option<usize>,
}

/// Validated manifest with its sorted label map.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    /// Class names; a name's position is its class index.
    pub classes: Vec<String>,
}

impl Manifest {
    /// Builds the label map (lexicographic) and assigns class indices.
    pub fn from_rows(rows: Vec<(PathBuf, String, Option<Split>, Option<usize>)>) -> Self {
        let classes: Vec<String> = rows
            .iter()
            .map(|r| r.1.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let rows = rows
            .into_iter()
            .map(|(path, label, split, fold)| ManifestRow {
                class: classes.binary_search(&label).expect("label collected above"),
                path,
                label,
                split,
                fold,
            })
            .collect();
        Self { rows, classes }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }

    pub fn has_splits(&self) -> bool {
        self.rows.iter().all(|r| r.split.is_some())
    }

    pub fn has_folds(&self) -> bool {
        self.rows.iter().all(|r| r.fold.is_some())
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestRow> {
        self.rows.iter().filter(|r| r.split == Some(split)).collect()
    }

    /// Rows whose file appears more than once.
    pub fn duplicates(&self) -> Vec<&Path> {
        let mut seen = HashSet::new();
        self.rows
            .iter()
            .filter(|r| !seen.insert(r.path.as_path()))
            .map(|r| r.path.as_path())
            .collect()
    }
}

/// Reads a `path,label[,split][,fold]` CSV. Relative paths resolve against
/// the manifest's directory and every referenced file must exist.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let err = |message: String| DataError::Manifest {
        path: path.to_path_buf(),
        message,
    };
    if !path.is_file() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header = reader.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(path_col), Some(label_col)) = (col("path"), col("label")) else {
        return Err(err(format!(
            "header must contain path and label columns, got '{}'",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    };
    let (split_col, fold_col) = (col("split"), col("fold"));
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let file = base.join(&record[path_col]);
        if !file.is_file() {
            return Err(err(format!("line {line}: file not found: {}", file.display())));
        }
        let label = record[label_col].to_string();
        if label.is_empty() {
            return Err(err(format!("line {line}: empty label")));
        }
        let split = match split_col.map(|c| &record[c]) {
            None | Some("") => None,
            Some(s) => Some(Split::parse(s).ok_or_else(|| {
                err(format!("line {line}: split '{s}' is not one of train, dev, test"))
            })?),
        };
        let fold = match fold_col.map(|c| &record[c]) {
            None | Some("") => None,
            Some(s) => Some(
                s.parse()
                    .map_err(|_| err(format!("line {line}: fold '{s}' is not a non-negative integer")))?,
            ),
        };
        rows.push((file, label, split, fold));
    }
    if rows.is_empty() {
        return Err(err("manifest has no rows".into()));
    }
    let manifest = Manifest::from_rows(rows);
    for dup in manifest.duplicates() {
        warn!("{}: duplicate entry {}", path.display(), dup.display());
    }
    Ok(manifest)
}

/// Writes a manifest with paths relative to `path`'s directory when possible.
pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new("."));
    let with_split = manifest.rows.iter().any(|r| r.split.is_some());
    let with_fold = manifest.rows.iter().any(|r| r.fold.is_some());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["path", "label"];
    if with_split {
        header.push("split");
    }
    if with_fold {
        header.push("fold");
    }
    w.write_record(&header)?;
    for r in &manifest.rows {
        let rel = r.path.strip_prefix(base).unwrap_or(&r.path);
        let mut rec = vec![rel.to_string_lossy().into_owned(), r.label.clone()];
        if with_split {
            rec.push(r.split.map(|s| s.name().to_string()).unwrap_or_default());
        }
        if with_fold {
            rec.push(r.fold.map(|f| f.to_string()).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(manifest: &str, files: &[&str]) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        for f in files {
            std::fs::write(dir.path().join(f), "0\n").unwrap();
        }
        let path = dir.path().join("manifest.csv");
        std::fs::write(&path, manifest).unwrap();
        (dir, path)
    }

    #[test]
    fn sorted_label_map() {
        let (_d, path) = setup("path,label\nx.csv,b\ny.csv,a\n", &["x.csv", "y.csv"]);
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.classes, ["a", "b"]);
        assert_eq!(m.rows.iter().map(|r| r.class).collect::<Vec<_>>(), [1, 0]);
    }

    #[test]
    fn label_map_ignores_row_order() {
        let (_d, p1) = setup("path,label\nx.csv,cat\ny.csv,ant\nx.csv,bee\n", &["x.csv", "y.csv"]);
        let (_e, p2) = setup("path,label\nx.csv,bee\nx.csv,cat\ny.csv,ant\n", &["x.csv", "y.csv"]);
        assert_eq!(load_manifest(&p1).unwrap().classes, load_manifest(&p2).unwrap().classes);
    }

    #[test]
    fn missing_file_is_named() {
        let (_d, path) = setup("path,label\nx.csv,a\nnope.csv,b\n", &["x.csv"]);
        let err = load_manifest(&path).unwrap_err().to_string();
        assert!(err.contains("nope.csv") && err.contains("line 3"), "{err}");
    }

    #[test]
    fn duplicates_allowed() {
        let (_d, path) = setup("path,label\nx.csv,a\nx.csv,b\n", &["x.csv"]);
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.duplicates().len(), 1);
    }

    #[test]
    fn optional_columns() {
        let (_d, path) = setup(
            "path,label,split,fold\nx.csv,a,train,0\ny.csv,b,dev,1\n",
            &["x.csv", "y.csv"],
        );
        let m = load_manifest(&path).unwrap();
        assert!(m.has_splits() && m.has_folds());
        assert_eq!(m.split(Split::Dev).len(), 1);
        assert_eq!(m.rows[1].fold, Some(1));
        let (_e, bad) = setup("path,label,split\nx.csv,a,holdout\n", &["x.csv"]);
        assert!(load_manifest(&bad).unwrap_err().to_string().contains("holdout"));
    }

    #[test]
    fn structural_errors() {
        let (_d, path) = setup("file,label\nx.csv,a\n", &["x.csv"]);
        assert!(load_manifest(&path).unwrap_err().to_string().contains("path and label"));
        let (_e, empty) = setup("path,label\n", &[]);
        assert!(load_manifest(&empty).unwrap_err().to_string().contains("no rows"));
    }

    #[test]
    fn write_round_trip() {
        let (dir, path) = setup("path,label,fold\nx.csv,a,0\ny.csv,b,1\n", &["x.csv", "y.csv"]);
        let m = load_manifest(&path).unwrap();
        let out = dir.path().join("copy.csv");
        write_manifest(&m, &out).unwrap();
        assert_eq!(std::fs::read_to_string(&out).unwrap(), "path,label,fold\nx.csv,a,0\ny.csv,b,1\n");
        assert_eq!(load_manifest(&out).unwrap(), m);
    }
}
