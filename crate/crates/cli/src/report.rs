//! Plain-text reports: a version line, `key = value` summary lines, then
//! named tables whose first row names the columns.

use std::fmt::Write as _;

pub const VERSION_TAG: &str = "phaseflow-report 1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Table {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub summary: Vec<(String, String)>,
    pub tables: Vec<Table>,
}

impl Report {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.summary
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{VERSION_TAG}").unwrap();
        for (k, v) in &self.summary {
            writeln!(out, "{k} = {v}").unwrap();
        }
        for t in &self.tables {
            writeln!(out, "[{}]", t.name).unwrap();
            writeln!(out, "{}", t.columns.join(" ")).unwrap();
            for r in &t.rows {
                writeln!(out, "{}", r.join(" ")).unwrap();
            }
        }
        out
    }

    /// Reads back a rendered report.
    pub fn parse(text: &str) -> Option<Report> {
        let mut lines = text.lines();
        if lines.next()? != VERSION_TAG {
            return None;
        }
        let mut rep = Report::default();
        let mut current: Option<Table> = None;
        for line in lines {
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                rep.tables.extend(current.take());
                current = Some(Table {
                    name: name.to_string(),
                    ..Default::default()
                });
                continue;
            }
            match current.as_mut() {
                None => {
                    let (k, v) = line.split_once(" = ")?;
                    rep.summary.push((k.to_string(), v.to_string()));
                }
                Some(t) if t.columns.is_empty() => {
                    t.columns = line.split(' ').map(str::to_string).collect();
                }
                Some(t) => t.rows.push(line.split(' ').map(str::to_string).collect()),
            }
        }
        rep.tables.extend(current);
        Some(rep)
    }
}

/// Fixed-point with `decimals` places; never prints `-0.000`.
pub fn fixed(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Scientific notation for error columns.
pub fn sci(v: f64) -> String {
    format!("{v:.3e}")
}
