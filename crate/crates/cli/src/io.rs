//! Atomic TSV output. Reports are written to a temporary file in the target
//! directory and renamed into place, so reruns overwrite without ever
//! exposing a partial file.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

/// One report row: metric name, value, sample count, seed.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub name: String,
    pub value: f64,
    pub n: usize,
    pub seed: u64,
}

impl ReportRow {
    pub fn new(name: impl Into<String>, value: f64, n: usize, seed: u64) -> Self {
        ReportRow { name: name.into(), value, n, seed }
    }
}

/// Write any TSV atomically; the content closure receives the open file.
pub fn write_atomic(path: &Path, content: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    content(tmp.as_file_mut())?;
    tmp.as_file_mut().flush()?;
    tmp.persist(path)
        .with_context(|| format!("replacing {}", path.display()))?;
    Ok(())
}

/// Standard metric report: `#name value n seed` header then one row per
/// metric.
pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "#name\tvalue\tn\tseed")?;
        for r in rows {
            writeln!(w, "{}\t{:.6}\t{}\t{}", r.name, r.value, r.n, r.seed)?;
        }
        Ok(())
    })
}

/// Read the rows of a metric report whose name matches `metric`.
pub fn read_report_metric(path: &Path, metric: &str) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading report {}", path.display()))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 2 {
            anyhow::bail!("{}:{}: expected at least 2 columns", path.display(), i + 1);
        }
        if cols[0] == metric {
            let v: f64 = cols[1]
                .parse()
                .with_context(|| format!("{}:{}: bad value {:?}", path.display(), i + 1, cols[1]))?;
            values.push(v);
        }
    }
    Ok(values)
}
