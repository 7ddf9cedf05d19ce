//! Run directories and the CSV / JSON writers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

/// Directory owning every file a study writes.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(RunDir { root: root.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    /// Resolves a bare file name; anything with a path component is rejected
    /// so writes stay inside the run directory.
    pub fn file(&self, name: &str) -> Result<PathBuf, CliError> {
        let p = Path::new(name);
        let bare = p.components().count() == 1 && p.file_name().is_some_and(|f| f == p.as_os_str());
        if !bare {
            return Err(CliError::Usage(format!("output name {name:?} must be a plain file name")));
        }
        Ok(self.root.join(p))
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.file(name)?;
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    /// Pretty JSON with sorted object keys.
    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = to_sorted_json(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// RFC 4180 CSV from serialisable records.
    pub fn write_csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<PathBuf, CliError> {
        let path = self.file(name)?;
        let mut w = csv::Writer::from_path(&path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    /// CSV with a dynamic header.
    pub fn write_table(&self, name: &str, header: &[String], rows: &[Vec<f64>]) -> Result<PathBuf, CliError> {
        let path = self.file(name)?;
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.iter().map(|v| format_float(*v)))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

/// Shortest round-trip decimal form, independent of locale.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    // serde_json's default map is ordered by key.
    let v: Value = serde_json::to_value(value)?;
    Ok(serde_json::to_string_pretty(&v)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        eps: f64,
        label: &'static str,
    }

    #[test]
    fn writes_stay_inside_the_run_dir() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = RunDir::create(&tmp.path().join("a/b")).unwrap();
        assert!(dir.file("../x.csv").is_err());
        assert!(dir.file("sub/x.csv").is_err());
        assert!(dir.file("/etc/x").is_err());
        assert!(dir.file("ok.csv").is_ok());
    }

    #[test]
    fn csv_and_json_formats() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = RunDir::create(tmp.path()).unwrap();
        let p = dir.write_csv("t.csv", &[Row { eps: 0.1, label: "a,b" }]).unwrap();
        assert_eq!(fs::read_to_string(p).unwrap(), "eps,label\n0.1,\"a,b\"\n");
        let p = dir.write_table("g.csv", &["t".into(), "u1".into()], &[vec![0.0, 1e-20]]).unwrap();
        assert_eq!(fs::read_to_string(p).unwrap(), "t,u1\n0.0,1e-20\n");
        let p = dir.write_json("r.json", &serde_json::json!({"zeta": 1, "alpha": {"b": 2, "a": 1}})).unwrap();
        let text = fs::read_to_string(p).unwrap();
        assert!(text.find("alpha").unwrap() < text.find("zeta").unwrap());
        assert!(text.find("\"a\"").unwrap() < text.find("\"b\"").unwrap());
    }
}
