//! Deterministic file emission with a checksum manifest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV text with a header row.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// Collects the files of one run. Without an output directory, CSV content
/// goes to stdout.
pub struct Sink {
    dir: Option<PathBuf>,
    written: Vec<(String, String)>,
}

impl Sink {
    pub fn new(dir: Option<&Path>) -> io::Result<Self> {
        if let Some(d) = dir {
            fs::create_dir_all(d)?;
        }
        Ok(Self { dir: dir.map(Path::to_path_buf), written: Vec::new() })
    }

    pub fn has_dir(&self) -> bool {
        self.dir.is_some()
    }

    /// Writes `name` under the output directory, or prints `content` when
    /// there is none.
    pub fn emit(&mut self, name: &str, content: &str) -> io::Result<()> {
        match &self.dir {
            Some(d) => {
                fs::write(d.join(name), content)?;
                self.written.push((name.to_string(), hex::encode(Sha256::digest(content.as_bytes()))));
            }
            None => print!("{content}"),
        }
        Ok(())
    }

    /// Writes `config.txt` and `manifest.txt` (config hash, then one
    /// `sha256  name` line per file in name order).
    pub fn finish(mut self, cfg: &RunConfig) -> io::Result<()> {
        if self.dir.is_none() {
            return Ok(());
        }
        self.emit("config.txt", &cfg.canonical())?;
        let mut files = self.written.clone();
        files.sort();
        let mut manifest = format!("config_sha256={}\n", cfg.hash());
        for (name, sum) in files {
            manifest.push_str(&format!("{sum}  {name}\n"));
        }
        let d = self.dir.as_ref().expect("checked above");
        fs::write(d.join("manifest.txt"), manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_num(-2.0), "-2.0000000000000000e0");
        let x = 1.0 / 3.0;
        assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn csv_has_header() {
        let mut c = Csv::new(&["a", "b"]);
        c.row(&["1".into(), "2".into()]);
        assert_eq!(c.into_string(), "a,b\n1,2\n");
    }
}
