//! Aggregation of results CSVs into per-group success fractions.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{RunRecord, SuccessFraction};

/// Column a results table can be grouped by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GroupAxis {
    NAgents,
    CycleLen,
    Horizon,
    Theta,
    FlashFraction,
    Sigma,
    Topology,
    KOrR,
    /// "odd" or "even" degree, from `k_or_r`.
    KParity,
}

impl GroupAxis {
    pub fn column(&self) -> &'static str {
        match self {
            GroupAxis::NAgents => "n_agents",
            GroupAxis::CycleLen => "cycle_len",
            GroupAxis::Horizon => "horizon",
            GroupAxis::Theta => "theta",
            GroupAxis::FlashFraction => "f",
            GroupAxis::Sigma => "sigma",
            GroupAxis::Topology => "topology",
            GroupAxis::KOrR => "k_or_r",
            GroupAxis::KParity => "k_parity",
        }
    }

    fn key(&self, r: &RunRecord) -> String {
        match self {
            GroupAxis::NAgents => r.n_agents.to_string(),
            GroupAxis::CycleLen => r.cycle_len.to_string(),
            GroupAxis::Horizon => r.horizon.to_string(),
            GroupAxis::Theta => r.theta.to_string(),
            GroupAxis::FlashFraction => r.f.to_string(),
            GroupAxis::Sigma => r.sigma.to_string(),
            GroupAxis::Topology => r.topology.clone(),
            GroupAxis::KOrR => r.k_or_r.clone(),
            GroupAxis::KParity => match r.k_or_r.parse::<u64>() {
                Ok(k) if k % 2 == 0 => "even".into(),
                Ok(_) => "odd".into(),
                Err(_) => "n/a".into(),
            },
        }
    }
}

impl FromStr for GroupAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "n" | "N" | "n_agents" => GroupAxis::NAgents,
            "c" | "C" | "cycle_len" => GroupAxis::CycleLen,
            "t" | "T" | "horizon" => GroupAxis::Horizon,
            "theta" => GroupAxis::Theta,
            "f" | "flash_fraction" => GroupAxis::FlashFraction,
            "sigma" | "noise" => GroupAxis::Sigma,
            "topology" => GroupAxis::Topology,
            "k" | "r" | "k_or_r" => GroupAxis::KOrR,
            "parity" | "k_parity" => GroupAxis::KParity,
            other => return Err(Error::param("group_by", format!("unknown axis `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub keys: Vec<String>,
    pub stats: SuccessFraction,
    pub mean_a_max: f64,
}

/// Compares numerically when both keys parse as numbers.
fn cmp_keys(a: &[String], b: &[String]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let ord = match (x.parse::<f64>(), y.parse::<f64>()) {
            (Ok(p), Ok(q)) => p.total_cmp(&q),
            _ => x.cmp(y),
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    Ordering::Equal
}

pub fn summarize(records: &[RunRecord], group_by: &[GroupAxis]) -> Result<Vec<GroupSummary>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("results CSV has no rows"));
    }
    let mut groups: BTreeMap<Vec<String>, (usize, usize, f64)> = BTreeMap::new();
    for r in records {
        let key: Vec<String> = group_by.iter().map(|g| g.key(r)).collect();
        let entry = groups.entry(key).or_default();
        entry.0 += 1;
        entry.1 += usize::from(r.success);
        entry.2 += r.a_max;
    }
    let mut out = groups
        .into_iter()
        .map(|(keys, (runs, successes, a_sum))| {
            Ok(GroupSummary {
                keys,
                stats: SuccessFraction::from_counts(successes, runs)?,
                mean_a_max: a_sum / runs as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| cmp_keys(&a.keys, &b.keys));
    Ok(out)
}

fn header(group_by: &[GroupAxis]) -> Vec<&'static str> {
    group_by
        .iter()
        .map(GroupAxis::column)
        .chain(["runs", "successes", "success_fraction", "half_width", "mean_a_max"])
        .collect()
}

fn row(g: &GroupSummary) -> Vec<String> {
    let mut cells = g.keys.clone();
    cells.extend([
        g.stats.runs.to_string(),
        g.stats.successes.to_string(),
        format!("{:.4}", g.stats.fraction),
        format!("{:.4}", g.stats.half_width),
        format!("{:.4}", g.mean_a_max),
    ]);
    cells
}

/// Tidy CSV: one row per group.
pub fn write_summary_csv<W: Write>(writer: W, group_by: &[GroupAxis], groups: &[GroupSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header(group_by))?;
    for g in groups {
        w.write_record(row(g))?;
    }
    w.flush().map_err(|e| Error::io("<summary csv>", e))
}

/// Right-aligned text table.
pub fn render_table(group_by: &[GroupAxis], groups: &[GroupSummary]) -> String {
    let head: Vec<String> = header(group_by).into_iter().map(String::from).collect();
    let rows: Vec<Vec<String>> = groups.iter().map(row).collect();
    let widths: Vec<usize> = (0..head.len())
        .map(|i| {
            rows.iter()
                .map(|r| r[i].len())
                .chain([head[i].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for line in std::iter::once(&head).chain(&rows) {
        let cells: Vec<String> = line
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  "));
    }
    out
}
