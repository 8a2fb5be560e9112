//! Output files are staged in memory and written only once a run has
//! produced all of them, each through a temporary file and a rename.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Default)]
pub struct Artifacts {
    files: BTreeMap<String, Vec<u8>>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.insert(name.into(), bytes.into());
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.get(name).map(Vec::as_slice)
    }

    pub fn write_all(&self, dir: &Path) -> Result<(), CliError> {
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        // stage everything first so a late failure leaves no new file behind
        let mut staged = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
            tmp.write_all(bytes).map_err(io)?;
            tmp.as_file().sync_all().map_err(io)?;
            staged.push((tmp, dir.join(name)));
        }
        for (tmp, target) in staged {
            tmp.persist(&target).map_err(|e| CliError::Io(format!("{}: {}", target.display(), e.error)))?;
        }
        Ok(())
    }
}

/// CSV number format: 17 significant digits, so values round-trip.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_every_file_and_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::default();
        a.add("a.csv", "x\n1\n");
        a.add_json("b.json", &[1.0, 2.5]).unwrap();
        a.write_all(dir.path()).unwrap();
        let mut names: Vec<_> =
            std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        names.sort();
        assert_eq!(names, ["a.csv", "b.json"]);
        assert_eq!(std::fs::read_to_string(dir.path().join("a.csv")).unwrap(), "x\n1\n");
    }

    #[test]
    fn numbers_round_trip() {
        let v = 0.1 + 0.2;
        assert_eq!(num(v).parse::<f64>().unwrap(), v);
    }
}
