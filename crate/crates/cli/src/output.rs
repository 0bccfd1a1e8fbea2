//! Rendering results to files and writing them atomically.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// Named file contents, written together or not at all.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OutputSet {
    pub files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn push(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn push_json(&mut self, name: &str, json: String) {
        let mut b = json.into_bytes();
        b.push(b'\n');
        self.push(name, b);
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }
}

/// CSV in memory with a fixed header.
pub struct Table {
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new<S: AsRef<[u8]>>(header: &[S]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Self { w }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields).expect("in-memory write");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.w.into_inner().expect("in-memory flush")
    }
}

/// Shortest representation that reads back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Writes every file to a temporary name in `dir`, then renames them all
/// into place. Nothing is written for an empty set, and temporaries are
/// removed if any write fails.
pub fn emit_outputs(set: &OutputSet, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if set.is_empty() {
        return Ok(Vec::new());
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::with_capacity(set.files.len());
    let cleanup = |staged: &[(PathBuf, PathBuf)]| {
        for (tmp, _) in staged {
            let _ = fs::remove_file(tmp);
        }
    };
    for (name, bytes) in &set.files {
        let target = dir.join(name);
        let tmp = dir.join(format!(".{name}.tmp"));
        if let Err(e) = fs::write(&tmp, bytes) {
            cleanup(&staged);
            let _ = fs::remove_file(&tmp);
            return Err(CliError::io(tmp, e));
        }
        staged.push((tmp, target));
    }
    let mut written = Vec::with_capacity(staged.len());
    for (i, (tmp, target)) in staged.iter().enumerate() {
        if let Err(e) = fs::rename(tmp, target) {
            cleanup(&staged[i..]);
            return Err(CliError::io(target.clone(), e));
        }
        written.push(target.clone());
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_set_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("sub");
        assert!(emit_outputs(&OutputSet::default(), &out).unwrap().is_empty());
        assert!(!out.exists());
    }

    #[test]
    fn files_land_without_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let mut set = OutputSet::default();
        let mut t = Table::new(&["a", "b"]);
        t.row([num(0.1), num(2.0)]);
        set.push("x.csv", t.into_bytes());
        set.push_json("y.json", "{}".into());
        emit_outputs(&set, dir.path()).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("x.csv")).unwrap(), "a,b\n0.1,2.0\n");
        let names: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(names.len(), 2);
        assert!(names.iter().all(|n| !n.ends_with(".tmp")));
    }
}
