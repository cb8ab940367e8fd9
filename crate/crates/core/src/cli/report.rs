//! Markdown rendering of a results CSV.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::experiments::eval::{mean, sample_std};
use crate::experiments::{RunRecord, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    /// One method × (split, metric) pivot per task.
    Table,
    /// One row per (task, method, split, metric).
    Summary,
}

const NOTE: &str = "_All values are measured by this run on synthetic desk-scale tasks. \
They are analogs of the studied effects, not reproductions of published numbers._";

fn cell(values: &[f64]) -> String {
    match values.len() {
        0 => "-".into(),
        1 => format!("{:.4}", values[0]),
        n => format!("{:.4} ± {:.4} (n={n})", mean(values), sample_std(values)),
    }
}

/// Per-grid-point tuning scores are left to the summary view.
fn in_table(r: &RunRecord) -> bool {
    !(r.metric.starts_with("accuracy_p") && r.metric[10..].chars().all(|c| c.is_ascii_digit()))
}

pub fn render(records: &[RunRecord], kind: ReportKind) -> String {
    let mut out = String::new();
    match kind {
        ReportKind::Table => render_tables(records, &mut out),
        ReportKind::Summary => render_summary(records, &mut out),
    }
    out.push('\n');
    out.push_str(NOTE);
    out.push('\n');
    out
}

fn render_tables(records: &[RunRecord], out: &mut String) {
    let mut tasks: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| in_table(r)) {
        tasks.entry(&r.task).or_default().push(r);
    }
    if tasks.is_empty() {
        out.push_str("| method |\n|---|\n");
        return;
    }
    for (i, (task, rows)) in tasks.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "## {task}\n");
        let mut methods: Vec<&str> = Vec::new();
        let mut cols: Vec<(Split, &str)> = Vec::new();
        let mut cells: BTreeMap<(&str, Split, &str), Vec<f64>> = BTreeMap::new();
        for r in rows {
            if !methods.contains(&r.method.as_str()) {
                methods.push(&r.method);
            }
            let col = (r.split, r.metric.as_str());
            if !cols.contains(&col) {
                cols.push(col);
            }
            cells.entry((&r.method, r.split, &r.metric)).or_default().push(r.value);
        }
        cols.sort();
        out.push_str("| method |");
        for (s, m) in &cols {
            let _ = write!(out, " {} {m} |", s.as_str());
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(cols.len()));
        out.push('\n');
        for m in &methods {
            let _ = write!(out, "| {m} |");
            for (s, metric) in &cols {
                let v = cells.get(&(m, *s, metric)).map(Vec::as_slice).unwrap_or(&[]);
                let _ = write!(out, " {} |", cell(v));
            }
            out.push('\n');
        }
    }
}

fn render_summary(records: &[RunRecord], out: &mut String) {
    let mut groups: BTreeMap<(&str, &str, Split, &str), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups.entry((&r.task, &r.method, r.split, &r.metric)).or_default().push(r.value);
    }
    out.push_str("| task | method | split | metric | mean | std | n |\n|---|---|---|---|---|---|---|\n");
    for ((t, m, s, metric), v) in &groups {
        let _ = writeln!(
            out,
            "| {t} | {m} | {} | {metric} | {:.4} | {:.4} | {} |",
            s.as_str(),
            mean(v),
            sample_std(v),
            v.len()
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(task: &str, method: &str, seed: u64, v: f64) -> RunRecord {
        RunRecord::new(format!("r{seed}"), seed, method, task, Split::OodTest, "probe_accuracy", v)
    }

    #[test]
    fn empty_input_gives_header_only() {
        let s = render(&[], ReportKind::Table);
        assert!(s.starts_with("| method |\n|---|\n"));
    }

    #[test]
    fn five_seeds_one_row() {
        let recs: Vec<_> = (0..5).map(|s| rec("t", "erm", s, 0.5 + 0.01 * s as f64)).collect();
        let s = render(&recs, ReportKind::Table);
        let rows: Vec<&str> = s.lines().filter(|l| l.starts_with("| erm")).collect();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].contains("0.5200 ± 0.0158 (n=5)"), "{}", rows[0]);
    }

    #[test]
    fn tasks_in_name_order() {
        let recs = vec![rec("zeta", "erm", 0, 0.1), rec("alpha", "erm", 0, 0.2)];
        let s = render(&recs, ReportKind::Table);
        assert!(s.find("## alpha").unwrap() < s.find("## zeta").unwrap());
    }

    #[test]
    fn grid_points_only_in_summary() {
        let mut r = rec("t", "erm", 0, 0.3);
        r.metric = "accuracy_p3".into();
        assert!(!render(&[r.clone()], ReportKind::Table).contains("accuracy_p3"));
        assert!(render(&[r], ReportKind::Summary).contains("accuracy_p3"));
    }
}
