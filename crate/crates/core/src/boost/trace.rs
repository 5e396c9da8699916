//! Per-iteration training records and their CSV form.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::error::DataError;

pub const TRACE_HEADER: &str = "iter,train_loss,train_err,test_err,base_class";

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 0 is the state before any tree is fitted.
    pub iteration: usize,
    pub train_loss: f64,
    pub train_errors: usize,
    pub test_errors: Option<usize>,
    /// Base class committed at this iteration (abc variants only).
    pub base_class: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<IterationRecord>,
}

impl Trace {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// Fewest test errors over iterations `>= 1`, with the earliest iteration
    /// reaching it.
    pub fn best_test(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize)> = None;
        for r in self.records.iter().filter(|r| r.iteration >= 1) {
            if let Some(e) = r.test_errors {
                if best.is_none_or(|(b, _)| e < b) {
                    best = Some((e, r.iteration));
                }
            }
        }
        best
    }

    /// Test errors and iteration of the last record.
    pub fn final_test(&self) -> Option<(usize, usize)> {
        let r = self.records.last()?;
        r.test_errors.map(|e| (e, r.iteration))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for r in &self.records {
            let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{:?},{},{},{}",
                r.iteration,
                r.train_loss,
                r.train_errors,
                opt(r.test_errors),
                opt(r.base_class)
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("trace is ASCII")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Trace, DataError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Trace::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Trace, DataError> {
        let malformed = |line: usize, message: String| DataError::Malformed {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == TRACE_HEADER => {}
            _ => return Err(malformed(1, format!("expected header {TRACE_HEADER:?}"))),
        }
        let mut records = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 5 {
                return Err(malformed(line_no, format!("expected 5 columns, found {}", cols.len())));
            }
            let int = |s: &str, what: &str| {
                s.parse::<usize>()
                    .map_err(|_| malformed(line_no, format!("bad {what} {s:?}")))
            };
            let opt = |s: &str, what: &str| {
                if s.is_empty() {
                    Ok(None)
                } else {
                    int(s, what).map(Some)
                }
            };
            records.push(IterationRecord {
                iteration: int(cols[0], "iteration")?,
                train_loss: cols[1]
                    .parse()
                    .map_err(|_| malformed(line_no, format!("bad loss {:?}", cols[1])))?,
                train_errors: int(cols[2], "train error count")?,
                test_errors: opt(cols[3], "test error count")?,
                base_class: opt(cols[4], "base class")?,
            });
        }
        Ok(Trace { records })
    }
}
