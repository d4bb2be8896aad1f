//! Deterministic CSV and summary emission.
//!
//! CSV files carry a header row and floats with 17 significant digits, so a
//! rerun with the same config and seed is byte-identical.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Format a float with 17 significant digits.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct CsvWriter {
    path: PathBuf,
    lines: Vec<String>,
}

impl CsvWriter {
    pub fn new(dir: &Path, name: &str, header: &[&str]) -> Self {
        CsvWriter { path: dir.join(name), lines: vec![header.join(",")] }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.lines.push(fields.join(","));
    }

    pub fn finish(self) -> std::io::Result<PathBuf> {
        let mut f = fs::File::create(&self.path)?;
        for line in &self.lines {
            writeln!(f, "{line}")?;
        }
        Ok(self.path)
    }
}

/// Plain-text run summary: one invariant per line with PASS/FAIL and the
/// measured value; exit status 0 iff everything passed.
pub struct Summary {
    lines: Vec<(String, bool, String)>,
}

impl Summary {
    pub fn new() -> Self {
        Summary { lines: Vec::new() }
    }

    pub fn check(&mut self, name: &str, passed: bool, value: String) {
        self.lines.push((name.to_string(), passed, value));
    }

    pub fn check_le(&mut self, name: &str, measured: f64, bound: f64) {
        self.check(name, measured <= bound, format!("{} (<= {})", fmt(measured), fmt(bound)));
    }

    pub fn all_passed(&self) -> bool {
        self.lines.iter().all(|(_, p, _)| *p)
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let mut f = fs::File::create(dir.join("summary.txt"))?;
        for (name, passed, value) in &self.lines {
            writeln!(f, "{} {name}: {value}", if *passed { "PASS" } else { "FAIL" })?;
        }
        Ok(())
    }

    pub fn print(&self) {
        for (name, passed, value) in &self.lines {
            println!("{} {name}: {value}", if *passed { "PASS" } else { "FAIL" });
        }
    }
}
