//! CSV result files with `#` comment headers and footers.
//!
//! Layout: header comments (tool version, command, full configuration),
//! `# span:` annotations, one column-name line, numeric rows, then footer
//! comments of the form `# key = value`. Numbers are printed with 17
//! significant digits so every `f64` reads back bit-exactly.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing column header line")]
    MissingColumns,
    #[error("row {row} has {got} fields, expected {expected}")]
    RowWidth { row: usize, got: usize, expected: usize },
}

/// Fallback span of one block, as logged by power-negotiated runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpanLine {
    pub block: usize,
    pub interval: usize,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    /// Header comment lines without the leading `# `.
    pub header: Vec<String>,
    pub spans: Vec<SpanLine>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Footer entries, in order.
    pub footer: Vec<(String, f64)>,
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_num(s: &str, line: usize) -> Result<f64, TableError> {
    s.trim().parse().map_err(|_| TableError::Parse {
        line,
        msg: format!("`{s}` is not a number"),
    })
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for h in &self.header {
            let _ = writeln!(s, "# {h}");
        }
        for sp in &self.spans {
            let _ = writeln!(
                s,
                "# span: block={} interval={} start={} end={}",
                sp.block,
                sp.interval,
                fmt_f64(sp.start),
                fmt_f64(sp.end)
            );
        }
        let _ = writeln!(s, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        for (k, v) in &self.footer {
            let _ = writeln!(s, "# {k} = {}", fmt_f64(*v));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, TableError> {
        let mut t = Table::default();
        let mut have_columns = false;
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if let Some(c) = line.strip_prefix('#') {
                let c = c.strip_prefix(' ').unwrap_or(c);
                if let Some(rest) = c.strip_prefix("span:") {
                    t.spans.push(parse_span(rest, n)?);
                } else if have_columns {
                    let (k, v) = c.split_once(" = ").ok_or_else(|| TableError::Parse {
                        line: n,
                        msg: "footer must read `key = value`".into(),
                    })?;
                    t.footer.push((k.to_string(), parse_num(v, n)?));
                } else {
                    t.header.push(c.to_string());
                }
            } else if !have_columns {
                t.columns = line.split(',').map(str::to_string).collect();
                have_columns = true;
            } else if !line.is_empty() {
                let row = line
                    .split(',')
                    .map(|c| parse_num(c, n))
                    .collect::<Result<Vec<_>, _>>()?;
                if row.len() != t.columns.len() {
                    return Err(TableError::RowWidth {
                        row: t.rows.len() + 1,
                        got: row.len(),
                        expected: t.columns.len(),
                    });
                }
                t.rows.push(row);
            }
        }
        if !have_columns {
            return Err(TableError::MissingColumns);
        }
        Ok(t)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn footer_value(&self, key: &str) -> Option<f64> {
        self.footer.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    /// Header lines of the form `key = value`, which include the full run
    /// configuration.
    pub fn header_settings(&self) -> impl Iterator<Item = (&str, &str)> {
        self.header
            .iter()
            .filter_map(|h| h.split_once(" = "))
    }
}

fn parse_span(rest: &str, line: usize) -> Result<SpanLine, TableError> {
    let mut fields = std::collections::BTreeMap::new();
    for part in rest.split_whitespace() {
        let (k, v) = part.split_once('=').ok_or_else(|| TableError::Parse {
            line,
            msg: format!("malformed span field `{part}`"),
        })?;
        fields.insert(k, v);
    }
    let get = |k: &str| {
        fields.get(k).copied().ok_or_else(|| TableError::Parse {
            line,
            msg: format!("span without `{k}`"),
        })
    };
    let int = |k: &str| -> Result<usize, TableError> {
        get(k)?.parse().map_err(|_| TableError::Parse {
            line,
            msg: format!("span `{k}` is not an index"),
        })
    };
    Ok(SpanLine {
        block: int("block")?,
        interval: int("interval")?,
        start: parse_num(get("start")?, line)?,
        end: parse_num(get("end")?, line)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, -1.0 / 3.0, 6.02214076e23, 5e-324, f64::MAX, -0.0, 1.0] {
            let s = fmt_f64(x);
            let digits = s.split('e').next().unwrap().chars().filter(char::is_ascii_digit).count();
            assert_eq!(digits, 17, "{s}");
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn table_round_trips() {
        let t = Table {
            header: vec!["cosim 0.1.0".into(), "H = 0.2".into()],
            spans: vec![SpanLine {
                block: 1,
                interval: 4,
                start: 0.61,
                end: 0.6300000000000001,
            }],
            columns: vec!["t".into(), "x_1".into()],
            rows: vec![vec![0.0, 1.0], vec![0.1, 0.1 + 0.2]],
            footer: vec![("drift".into(), 1e-3)],
        };
        let back = Table::parse(&t.to_csv()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.column("x_1").unwrap()[1], 0.1 + 0.2);
        assert_eq!(back.footer_value("drift"), Some(1e-3));
        assert_eq!(back.header_settings().collect::<Vec<_>>(), vec![("H", "0.2")]);
    }

    #[test]
    fn malformed_files_rejected() {
        assert_eq!(Table::parse("# only comments\n"), Err(TableError::MissingColumns));
        assert!(matches!(Table::parse("a,b\n1,x\n"), Err(TableError::Parse { line: 2, .. })));
        assert!(matches!(Table::parse("a,b\n1\n"), Err(TableError::RowWidth { .. })));
        assert!(Table::parse("# span: block=a\na\n").is_err());
    }
}
