//! Writing reports. Floats are printed with Rust's shortest round-trip
//! formatting, so identical reports give identical bytes.

use super::{ExperimentReport, ReportFormat};
use crate::error::Result;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_masses_csv<W: Write>(report: &ExperimentReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "M_n", "mu_Rn_est", "stderr", "three_p_bound"])?;
    for row in &report.masses {
        w.write_record([
            row.n.to_string(),
            row.m_n.to_string(),
            row.mu_rn.to_string(),
            row.stderr.to_string(),
            opt(row.three_p_bound),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_hits_csv<W: Write>(report: &ExperimentReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed_index", "hit_count", "first_hit", "last_hit"])?;
    for row in &report.hits {
        w.write_record([
            row.seed_index.to_string(),
            row.hit_count.to_string(),
            opt(row.first_hit),
            opt(row.last_hit),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_quasi_csv<W: Write>(report: &ExperimentReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["N", "sigma_N", "S_N", "C_N", "ce_bound"])?;
    for q in report.divergence.iter().flat_map(|d| &d.reports) {
        w.write_record([
            q.n.to_string(),
            q.sigma_n.to_string(),
            q.s_n.to_string(),
            q.c_n.to_string(),
            q.ce_bound.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `report.json`, plus `masses.csv`, `hits.csv` and `quasi.csv` for
/// the CSV bundle. Returns the paths written.
pub fn emit_report(
    report: &ExperimentReport,
    format: ReportFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let json_path = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(&json_path, text)?;
    written.push(json_path);
    if format == ReportFormat::CsvBundle {
        type Writer = fn(&ExperimentReport, fs::File) -> Result<()>;
        let tables: [(&str, Writer); 3] = [
            ("masses.csv", write_masses_csv),
            ("hits.csv", write_hits_csv),
            ("quasi.csv", write_quasi_csv),
        ];
        for (name, write) in tables {
            let path = dir.join(name);
            write(report, fs::File::create(&path)?)?;
            written.push(path);
        }
    }
    Ok(written)
}
