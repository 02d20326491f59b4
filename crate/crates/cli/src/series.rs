//! `series`: two-column plot data projected from check reports.

use crate::error::{io, CliError};
use clap::ValueEnum;
use multiflat::{CheckId, CheckReport};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SeriesKind {
    /// (generation, cumulative Σα²μ) from CH4 reports
    Carleson,
    /// (α, β₁) per admitted cube from CH2 reports
    Scatter,
    /// (depth, C*) per measure and check
    Cstar,
}

impl SeriesKind {
    fn name(self) -> &'static str {
        match self {
            SeriesKind::Carleson => "carleson",
            SeriesKind::Scatter => "scatter",
            SeriesKind::Cstar => "cstar",
        }
    }

    fn source(self) -> Option<CheckId> {
        match self {
            SeriesKind::Carleson => Some(CheckId::Ch4),
            SeriesKind::Scatter => Some(CheckId::Ch2),
            SeriesKind::Cstar => None,
        }
    }
}

/// A report together with the name of the directory it was found in.
struct Found {
    group: String,
    report: CheckReport,
}

fn collect(dir: &Path, out: &mut Vec<Found>) -> Result<(), CliError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io(dir))?
        .map(|e| e.map(|e| e.path()).map_err(io(dir)))
        .collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            if p.file_name().is_some_and(|n| n != "cache" && n != "series") {
                collect(&p, out)?;
            }
        } else if p.extension().is_some_and(|e| e == "json") {
            let text = std::fs::read_to_string(&p).map_err(io(&p))?;
            // manifests and caches are not reports
            if let Ok(report) = serde_json::from_str::<CheckReport>(&text) {
                let group = p.parent().and_then(|d| d.file_name()).map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                out.push(Found { group, report });
            }
        }
    }
    Ok(())
}

/// Writes series files into `<dir>/series/` and returns their paths.
pub fn series(dir: &Path, kind: SeriesKind) -> Result<Vec<PathBuf>, CliError> {
    let mut found = Vec::new();
    collect(dir, &mut found)?;
    if let Some(id) = kind.source() {
        found.retain(|f| f.report.check == id);
    }
    if found.is_empty() {
        let expected = match kind.source() {
            Some(id) => format!("reports/<measure>/{id}_d<depth>.json"),
            None => "reports/<measure>/CH<k>_d<depth>.json".to_string(),
        };
        return Err(CliError::NoReports { kind: kind.name().into(), dir: dir.to_path_buf(), expected });
    }
    let out = dir.join("series");
    std::fs::create_dir_all(&out).map_err(io(&out))?;
    let mut files: BTreeMap<String, String> = BTreeMap::new();
    match kind {
        SeriesKind::Carleson => {
            for f in &found {
                let cum = f.report.details.get("cumulative").and_then(|v| v.as_array()).cloned().unwrap_or_default();
                let mut s = String::from("# generation cumulative_packing\n");
                for (j, v) in cum.iter().enumerate() {
                    let _ = writeln!(s, "{j} {}", v.as_f64().unwrap_or(f64::NAN));
                }
                files.insert(format!("carleson_{}_d{}.dat", f.group, f.report.depth), s);
            }
        }
        SeriesKind::Scatter => {
            for f in &found {
                let rows = f.report.details.get("scatter").and_then(|v| v.as_array()).cloned().unwrap_or_default();
                let mut s = String::from("# alpha beta1\n");
                for r in rows {
                    let _ = writeln!(s, "{} {}", r[1].as_f64().unwrap_or(f64::NAN), r[2].as_f64().unwrap_or(f64::NAN));
                }
                files.insert(format!("scatter_{}_d{}.dat", f.group, f.report.depth), s);
            }
        }
        SeriesKind::Cstar => {
            let mut groups: BTreeMap<(String, CheckId), Vec<(u32, f64)>> = BTreeMap::new();
            for f in &found {
                groups.entry((f.group.clone(), f.report.check)).or_default().push((f.report.depth, f.report.c_star));
            }
            for ((group, id), mut rows) in groups {
                rows.sort_by_key(|r| r.0);
                let mut s = String::from("# depth c_star\n");
                for (d, c) in rows {
                    let _ = writeln!(s, "{d} {c}");
                }
                files.insert(format!("cstar_{group}_{id}.dat"), s);
            }
        }
    }
    let mut written = Vec::new();
    for (name, body) in files {
        let p = out.join(name);
        std::fs::write(&p, body).map_err(io(&p))?;
        written.push(p);
    }
    Ok(written)
}
