//! JSON-lines verification reports and CSV ladders.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One pass/fail record of a single check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub suite: String,
    pub check: String,
    /// The property being checked, in words.
    pub anchor: String,
    pub measured: serde_json::Value,
    pub tolerance: serde_json::Value,
    pub pass: bool,
    pub seed: u64,
    pub runtime_ms: u64,
}

impl VerificationReport {
    pub fn new(
        suite: &str,
        check: impl Into<String>,
        anchor: &str,
        measured: serde_json::Value,
        tolerance: serde_json::Value,
        pass: bool,
        seed: u64,
    ) -> VerificationReport {
        VerificationReport {
            suite: suite.into(),
            check: check.into(),
            anchor: anchor.into(),
            measured,
            tolerance,
            pass,
            seed,
            runtime_ms: 0,
        }
    }

    pub fn timed(mut self, ms: u64) -> VerificationReport {
        self.runtime_ms = ms;
        self
    }

    /// The record with its wall-clock field cleared, for reproducibility comparisons.
    pub fn without_runtime(&self) -> VerificationReport {
        VerificationReport {
            runtime_ms: 0,
            ..self.clone()
        }
    }
}

/// Writes reports to stdout and, when an output directory is set, to `report.jsonl`.
pub struct ReportWriter {
    file: Option<BufWriter<File>>,
    out: Option<PathBuf>,
    echo: bool,
    all_pass: bool,
    count: usize,
}

impl ReportWriter {
    pub fn new(out: Option<&Path>, echo: bool) -> Result<ReportWriter> {
        let file = match out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                Some(BufWriter::new(File::create(dir.join("report.jsonl"))?))
            }
            None => None,
        };
        Ok(ReportWriter {
            file,
            out: out.map(Path::to_path_buf),
            echo,
            all_pass: true,
            count: 0,
        })
    }

    pub fn emit(&mut self, r: &VerificationReport) -> Result<()> {
        let line = serde_json::to_string(r)?;
        if self.echo {
            println!("{line}");
        }
        if let Some(f) = self.file.as_mut() {
            writeln!(f, "{line}")?;
        }
        self.all_pass &= r.pass;
        self.count += 1;
        Ok(())
    }

    pub fn emit_all(&mut self, rs: &[VerificationReport]) -> Result<()> {
        rs.iter().try_for_each(|r| self.emit(r))
    }

    /// Writes a ladder table as `<name>.csv` in the output directory, if any.
    pub fn ladder(&self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        if let Some(dir) = &self.out {
            write_csv(&dir.join(format!("{name}.csv")), header, rows)?;
        }
        Ok(())
    }

    /// Writes an arbitrary JSON artefact in the output directory, if any.
    pub fn artefact(&self, name: &str, value: &serde_json::Value) -> Result<()> {
        if let Some(dir) = &self.out {
            fs::write(dir.join(name), serde_json::to_string_pretty(value)?)?;
        }
        Ok(())
    }

    pub fn all_pass(&self) -> bool {
        self.all_pass
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(mut self) -> Result<bool> {
        if let Some(f) = self.file.as_mut() {
            f.flush()?;
        }
        Ok(self.all_pass)
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.10e}")).collect();
        writeln!(f, "{}", cells.join(","))?;
    }
    f.flush()?;
    Ok(())
}
