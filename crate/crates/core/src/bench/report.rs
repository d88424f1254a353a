//! Table and convergence files.

use std::path::{Path, PathBuf};

use super::{BenchError, DatasetReport};
use crate::fsutil::write_atomic;

/// Scientific notation with three significant digits, e.g. `2.06e6`.
pub fn format_sci(x: f64) -> String {
    format!("{x:.2e}")
}

pub fn table_to_csv(report: &DatasetReport) -> String {
    let mut out = String::from("dataset,variant,mean,best,std,pct_delta,best_mean,best_best,significant\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.dataset,
            r.variant,
            r.mean,
            r.best,
            r.std,
            r.pct_delta.map_or(String::new(), |d| d.to_string()),
            r.best_mean,
            r.best_best,
            r.significant
        ));
    }
    out
}

/// Aligned text table. `*x*` marks the lowest value of a column and
/// `_x_` a significant lead.
pub fn table_to_text(report: &DatasetReport) -> String {
    let mark = |v: f64, bold: bool, under: bool| {
        let mut s = format_sci(v);
        if under {
            s = format!("_{s}_");
        }
        if bold {
            s = format!("*{s}*");
        }
        s
    };
    let header = ["Method", "mean", "best", "std", "%Δ"].map(String::from);
    let mut cells: Vec<[String; 5]> = vec![header];
    for r in &report.rows {
        cells.push([
            r.variant.label().to_string(),
            mark(r.mean, r.best_mean, r.significant),
            mark(r.best, r.best_best, false),
            format_sci(r.std),
            r.pct_delta.map_or("-".to_string(), |d| format!("{d:.2}")),
        ]);
    }
    let widths: Vec<usize> = (0..5)
        .map(|c| cells.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = format!("{}\n", report.dataset);
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, &w))| {
                let pad = w - s.chars().count();
                if c == 0 {
                    format!("{s}{}", " ".repeat(pad))
                } else {
                    format!("{}{s}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out.push_str("*x*: lowest in column; _x_: better than every other variant (rank-sum p < 0.05)\n");
    out
}

pub fn convergence_to_csv(report: &DatasetReport) -> String {
    let mut out = String::from("generation");
    for (v, _) in &report.convergence {
        out.push(',');
        out.push_str(v.key());
    }
    out.push('\n');
    let len = report.convergence.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    for g in 0..len {
        out.push_str(&g.to_string());
        for (_, c) in &report.convergence {
            out.push(',');
            if let Some(x) = c.get(g) {
                out.push_str(&x.to_string());
            }
        }
        out.push('\n');
    }
    out
}

pub fn pvalues_to_csv(report: &DatasetReport) -> String {
    let mut out = String::from("variant_a,variant_b,u,p\n");
    for t in &report.pairs {
        out.push_str(&format!("{},{},{},{}\n", t.a, t.b, t.u, t.p));
    }
    out
}

/// Writes `<dataset>_table.csv`, `<dataset>_table.txt`,
/// `<dataset>_convergence.csv` and `<dataset>_pvalues.csv` into `dir`.
pub fn emit_reports(reports: &[DatasetReport], dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let mut written = Vec::new();
    for r in reports {
        let files = [
            ("table.csv", table_to_csv(r)),
            ("table.txt", table_to_text(r)),
            ("convergence.csv", convergence_to_csv(r)),
            ("pvalues.csv", pvalues_to_csv(r)),
        ];
        for (suffix, text) in files {
            let path = dir.join(format!("{}_{suffix}", r.dataset));
            write_atomic(&path, text.as_bytes())?;
            written.push(path);
        }
    }
    Ok(written)
}
