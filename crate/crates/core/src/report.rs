//! Plain-text report format shared by every exported table.
//!
//! A report is a block of `# key = value` metadata lines, one tab-separated
//! header row, then tab-separated data rows. Floats are written in Rust's
//! shortest round-trip form so a value read back is bit-identical.

use std::io::Write;

use crate::error::Result;

/// Shortest decimal representation that parses back to the same `f64`.
pub fn format_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Splits a `# key = value` line.
pub fn parse_header_line(line: &str) -> Option<(&str, &str)> {
    let rest = line.strip_prefix('#')?;
    let (k, v) = rest.split_once('=')?;
    Some((k.trim(), v.trim()))
}

/// Columnar table with a metadata header.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Report {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            metadata: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.metadata.push((key.into(), value.to_string()));
        self
    }

    pub fn push_row(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn get_meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (k, v) in &self.metadata {
            writeln!(w, "# {k} = {v}")?;
        }
        writeln!(w, "{}", self.columns.join("\t"))?;
        for r in &self.rows {
            writeln!(w, "{}", r.join("\t"))?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("report is utf-8")
    }

    pub fn parse(text: &str) -> Self {
        let mut r = Report::default();
        for line in text.lines() {
            if let Some((k, v)) = parse_header_line(line) {
                r.metadata.push((k.to_string(), v.to_string()));
            } else if line.starts_with('#') || line.trim().is_empty() {
                continue;
            } else if r.columns.is_empty() {
                r.columns = line.split('\t').map(str::to_string).collect();
            } else {
                r.rows.push(line.split('\t').map(str::to_string).collect());
            }
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_back() {
        let mut r = Report::new(&["a", "b"]);
        r.meta("seed", 4).meta("convention", "white-discrete");
        r.push_row(vec![format_f64(0.1), format_f64(1e-300)]);
        let back = Report::parse(&r.to_text());
        assert_eq!(back, r);
        assert_eq!(back.get_meta("seed"), Some("4"));
        assert_eq!(back.column("b").unwrap()[0].parse::<f64>().unwrap(), 1e-300);
    }
}
