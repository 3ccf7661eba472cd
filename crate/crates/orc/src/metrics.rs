//! Per-epoch metrics rows, the CSV contract, and the cross-run summary.
//!
//! CSV schema (fixed column order, floats at 6 decimals, newline-terminated):
//! `epoch, lr, acc_<net>..., ce_<net>..., mean_lambda, promoted_<net>...`

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub lr: f64,
    /// Per-network test accuracy, pivot first.
    pub test_accuracy: Vec<f64>,
    /// Per-network mean training cross-entropy over the epoch.
    pub train_ce: Vec<f64>,
    /// Mean mixup ratio over the epoch (0 when intensive teaching is off).
    pub mean_lambda: f64,
    /// How often each network was promoted this epoch; the pivot's slot
    /// stays 0 and the total equals k × iterations-per-epoch.
    pub promotions: Vec<u64>,
}

fn render(rows: &[MetricsRow], net_names: &[String]) -> Result<String> {
    let mut out = String::new();
    let mut header = vec!["epoch".to_string(), "lr".to_string()];
    header.extend(net_names.iter().map(|n| format!("acc_{n}")));
    header.extend(net_names.iter().map(|n| format!("ce_{n}")));
    header.push("mean_lambda".to_string());
    header.extend(net_names.iter().map(|n| format!("promoted_{n}")));
    let _ = writeln!(out, "{}", header.join(","));
    for row in rows {
        if row.test_accuracy.len() != net_names.len()
            || row.train_ce.len() != net_names.len()
            || row.promotions.len() != net_names.len()
        {
            return Err(Error::format(format!(
                "metrics row for epoch {} does not cover all {} networks",
                row.epoch,
                net_names.len()
            )));
        }
        let mut fields = vec![row.epoch.to_string(), format!("{:.6}", row.lr)];
        fields.extend(row.test_accuracy.iter().map(|v| format!("{v:.6}")));
        fields.extend(row.train_ce.iter().map(|v| format!("{v:.6}")));
        fields.push(format!("{:.6}", row.mean_lambda));
        fields.extend(row.promotions.iter().map(u64::to_string));
        let _ = writeln!(out, "{}", fields.join(","));
    }
    Ok(out)
}

/// Writes the rows (header always included) to `path`.
pub fn write_metrics(rows: &[MetricsRow], net_names: &[String], path: &Path) -> Result<()> {
    let text = render(rows, net_names)?;
    std::fs::write(path, text)?;
    Ok(())
}

struct ParsedRun {
    name: String,
    net_names: Vec<String>,
    /// best-epoch accuracy per network
    best: Vec<f64>,
}

fn parse_csv(path: &Path) -> Result<ParsedRun> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::format(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(format!("{}: empty file", path.display())))?;
    let columns: Vec<&str> = header.split(',').collect();
    let acc_cols: Vec<(usize, String)> = columns
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.strip_prefix("acc_").map(|n| (i, n.to_string())))
        .collect();
    if acc_cols.is_empty() {
        return Err(Error::format(format!(
            "{}: no acc_* columns in header",
            path.display()
        )));
    }
    let mut best = vec![f64::NEG_INFINITY; acc_cols.len()];
    let mut row_count = 0usize;
    for (line_no, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::format(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                line_no + 2,
                fields.len(),
                columns.len()
            )));
        }
        for (slot, (col, _)) in acc_cols.iter().enumerate() {
            let v: f64 = fields[*col].parse().map_err(|_| {
                Error::format(format!(
                    "{}: row {}: '{}' is not a number",
                    path.display(),
                    line_no + 2,
                    fields[*col]
                ))
            })?;
            if v > best[slot] {
                best[slot] = v;
            }
        }
        row_count += 1;
    }
    if row_count == 0 {
        best.fill(f64::NAN);
    }
    Ok(ParsedRun {
        name: path.display().to_string(),
        net_names: acc_cols.into_iter().map(|(_, n)| n).collect(),
        best,
    })
}

/// Best-epoch accuracy per network per run, plus deltas against the first
/// run, formatted as an aligned text table (accuracies in percent).
pub fn summarize(paths: &[std::path::PathBuf]) -> Result<String> {
    if paths.is_empty() {
        return Err(Error::format("summarize needs at least one CSV path"));
    }
    let runs: Vec<ParsedRun> = paths.iter().map(|p| parse_csv(p)).collect::<Result<_>>()?;
    let reference = &runs[0];
    for run in &runs[1..] {
        if run.net_names != reference.net_names {
            return Err(Error::format(format!(
                "{}: networks {:?} do not match {:?} from {}",
                run.name, run.net_names, reference.net_names, reference.name
            )));
        }
    }
    let name_width = runs.iter().map(|r| r.name.len()).max().unwrap_or(3).max(3);
    let mut out = String::new();
    let _ = write!(out, "{:<name_width$}", "run");
    for net in &reference.net_names {
        let _ = write!(out, "  {:>12}", format!("best_{net}"));
    }
    out.push('\n');
    for run in &runs {
        let _ = write!(out, "{:<name_width$}", run.name);
        for v in &run.best {
            let _ = write!(out, "  {:>12.2}", v * 100.0);
        }
        out.push('\n');
    }
    if runs.len() > 1 {
        for run in &runs[1..] {
            let _ = write!(out, "{:<name_width$}", format!("Δ vs {}", reference.name));
            for (v, r) in run.best.iter().zip(&reference.best) {
                let _ = write!(out, "  {:>+12.2}", (v - r) * 100.0);
            }
            out.push('\n');
        }
    }
    Ok(out)
}
