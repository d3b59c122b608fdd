use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::models::{Task, Variant};

use super::{RunReport, ShotSetting};

/// Renders a variant × shot-setting grid. Cells read `macroF1 / accuracy`
/// for intent and `macroF1 / microF1` for slot, in percent. Several reports
/// for one cell (different seeds) are averaged; empty cells show `-`. Rows
/// and columns follow the order in which they first appear.
pub fn emit_table(reports: &[RunReport]) -> Result<String> {
    let Some(first) = reports.first() else {
        return Err(Error::InvalidArgument("no reports to tabulate".into()));
    };
    let task = first.config.task;
    if reports.iter().any(|r| r.config.task != task) {
        return Err(Error::InvalidArgument("reports mix intent and slot runs".into()));
    }
    let mut rows: Vec<Variant> = Vec::new();
    let mut cols: Vec<ShotSetting> = Vec::new();
    let mut cells: BTreeMap<(usize, usize), (f64, f64, usize)> = BTreeMap::new();
    for r in reports {
        let row = position(&mut rows, r.config.variant);
        let col = position(&mut cols, r.config.shots);
        let second = match task {
            Task::Intent => r.eval.accuracy.unwrap_or(0.0),
            Task::Slot => r.eval.micro_f1.unwrap_or(0.0),
        };
        let cell = cells.entry((row, col)).or_insert((0.0, 0.0, 0));
        cell.0 += r.eval.macro_f1;
        cell.1 += second;
        cell.2 += 1;
    }

    let header: Vec<String> = std::iter::once("model".to_string())
        .chain(cols.iter().map(|c| c.to_string()))
        .collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .enumerate()
        .map(|(ri, v)| {
            std::iter::once(v.name().to_string())
                .chain((0..cols.len()).map(|ci| match cells.get(&(ri, ci)) {
                    Some(&(a, b, n)) => {
                        let n = n as f64;
                        format!("{:.2} / {:.2}", 100.0 * a / n, 100.0 * b / n)
                    }
                    None => "-".to_string(),
                }))
                .collect()
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            std::iter::once(&header)
                .chain(&body)
                .map(|row| row[c].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();

    let mut out = String::new();
    let second = match task {
        Task::Intent => "accuracy",
        Task::Slot => "microF1",
    };
    let _ = writeln!(out, "{task}: macroF1 / {second}");
    for (i, row) in std::iter::once(&header).chain(&body).enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", line.join(" | ").trim_end());
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            let _ = writeln!(out, "{}", rule.join("-|-"));
        }
    }
    Ok(out)
}

fn position<T: PartialEq + Copy>(seen: &mut Vec<T>, item: T) -> usize {
    seen.iter().position(|x| *x == item).unwrap_or_else(|| {
        seen.push(item);
        seen.len() - 1
    })
}
