//! Comparison tables from the result ledgers and curve files from training
//! logs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ledger::{self, read_csv, CLASSIFICATION_LEDGER, GENERATIVE_LEDGER};

/// One comparison row: a dataset/depth (and stage) with one value per scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub group: String,
    /// `(scheme, value, spread)`; repeated runs are averaged.
    pub cells: Vec<(String, f64, f64)>,
    /// Index into `cells` of the best entry.
    pub best: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub title: String,
    pub metric: String,
    pub rows: Vec<ComparisonRow>,
}

impl Table {
    pub fn to_text(&self) -> String {
        let mut out = format!("{} ({}; * marks the best entry)\n", self.title, self.metric);
        for r in &self.rows {
            let cells: Vec<String> = r
                .cells
                .iter()
                .enumerate()
                .map(|(i, (s, v, e))| format!("{s}={v:.4}±{e:.4}{}", if i == r.best { "*" } else { "" }))
                .collect();
            out.push_str(&format!("  {:<28} {}\n", r.group, cells.join("  ")));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,scheme,value,spread,best\n");
        for r in &self.rows {
            for (i, (s, v, e)) in r.cells.iter().enumerate() {
                out.push_str(&format!("{},{},{v},{e},{}\n", ledger::field(&r.group), ledger::field(s), u8::from(i == r.best)));
            }
        }
        out
    }
}

fn column(header: &[String], name: &str, path: &Path) -> Result<usize> {
    header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: format!("missing column '{name}'"),
    })
}

fn number(s: &str, path: &Path, line: usize) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("'{s}' is not a number"),
    })
}

/// Groups rows by `group_cols`, one cell per scheme; `higher_is_better`
/// picks the best marker direction.
fn build(path: &Path, title: &str, metric: &str, value: &str, spread: &str, group_cols: &[&str], higher_is_better: bool) -> Result<Table> {
    let (header, rows) = read_csv(path)?;
    let gi: Vec<usize> = group_cols.iter().map(|c| column(&header, c, path)).collect::<Result<_>>()?;
    let si = column(&header, "scheme", path)?;
    let vi = column(&header, value, path)?;
    let ei = column(&header, spread, path)?;
    let mut groups: BTreeMap<String, BTreeMap<String, Vec<(f64, f64)>>> = BTreeMap::new();
    for (k, r) in rows.iter().enumerate() {
        let key = gi.iter().map(|&i| r[i].as_str()).collect::<Vec<_>>().join(" ");
        let v = number(&r[vi], path, k + 2)?;
        let e = number(&r[ei], path, k + 2)?;
        groups.entry(key).or_default().entry(r[si].clone()).or_default().push((v, e));
    }
    let rows = groups
        .into_iter()
        .map(|(group, schemes)| {
            let cells: Vec<(String, f64, f64)> = schemes
                .into_iter()
                .map(|(s, vals)| {
                    let n = vals.len() as f64;
                    let v = vals.iter().map(|p| p.0).sum::<f64>() / n;
                    let e = vals.iter().map(|p| p.1).sum::<f64>() / n;
                    (s, v, e)
                })
                .collect();
            let mut best = 0;
            for (i, c) in cells.iter().enumerate() {
                let better = if higher_is_better { c.1 > cells[best].1 } else { c.1 < cells[best].1 };
                if better {
                    best = i;
                }
            }
            ComparisonRow { group, cells, best }
        })
        .collect();
    Ok(Table {
        title: title.into(),
        metric: metric.into(),
        rows,
    })
}

pub fn generative_table(path: &Path) -> Result<Table> {
    build(path, "Parzen test log-likelihood", "mean_ll ± stderr, higher is better", "mean_ll", "stderr", &["dataset", "depth"], true)
}

pub fn classification_table(path: &Path) -> Result<Table> {
    build(path, "Test classification error", "percent ± 95% CI, lower is better", "error", "ci", &["dataset", "depth", "stage"], false)
}

/// `epoch,train,valid` from a training-log CSV.
pub fn curve_csv(log: &Path) -> Result<String> {
    let (header, rows) = read_csv(log)?;
    let e = column(&header, "epoch", log)?;
    let t = column(&header, "train_err", log)?;
    let v = column(&header, "valid_err", log)?;
    let mut out = String::from("epoch,train,valid\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r[e], r[t], r[v]));
    }
    Ok(out)
}

pub struct ReportFiles {
    pub text: String,
    pub written: Vec<PathBuf>,
}

/// Reads the ledgers and training logs under `dir` and writes the report
/// files into `out`.
pub fn write_report(dir: &Path, out: &Path) -> Result<ReportFiles> {
    let mut text = String::new();
    let mut written = Vec::new();
    let mut rows = 0;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let tables = [
        (GENERATIVE_LEDGER, "report-generative.csv", generative_table as fn(&Path) -> Result<Table>),
        (CLASSIFICATION_LEDGER, "report-classification.csv", classification_table),
    ];
    for (ledger_name, csv_name, make) in tables {
        let path = dir.join(ledger_name);
        if !path.is_file() {
            continue;
        }
        let table = make(&path)?;
        rows += table.rows.len();
        text.push_str(&table.to_text());
        text.push('\n');
        let dst = out.join(csv_name);
        ledger::write_file(&dst, table.to_csv())?;
        written.push(dst);
    }
    let mut logs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("trainlog-") && n.ends_with(".csv")))
        .collect();
    logs.sort();
    for log in logs {
        let name = log.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let dst = out.join(name.replacen("trainlog-", "curve-", 1));
        ledger::write_file(&dst, curve_csv(&log)?)?;
        written.push(dst);
    }
    if rows == 0 {
        return Err(Error::Config(format!("no ledger rows found in {}", dir.display())));
    }
    let dst = out.join("report.txt");
    ledger::write_file(&dst, &text)?;
    written.push(dst);
    Ok(ReportFiles { text, written })
}
