//! Text formats: the repository's sparse multi-label format and the scored
//! row format used for shortlists and predictions.
//!
//! ```text
//! N V L
//! l1,l2,... f1:v1 f2:v2 ...
//! ```
//!
//! ```text
//! N L
//! l1:s1 l2:s2 ...
//! ```

use std::io::{BufRead, Write};

use xmc_core::shortlist::Shortlist;
use xmc_core::{Dataset, LabelId, SparseVector};

use crate::error::{Result, XmcError};

/// Non-fatal findings while parsing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseReport {
    /// Label ids that appeared more than once on their line.
    pub duplicate_labels: usize,
}

fn header(line: Option<std::io::Result<String>>, fields: usize) -> Result<Vec<usize>> {
    let line = line
        .ok_or_else(|| XmcError::MalformedHeader("empty input".into()))?
        .map_err(|e| XmcError::MalformedHeader(e.to_string()))?;
    let nums: Vec<usize> = line
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| XmcError::MalformedHeader(line.trim_end().to_string()))?;
    if nums.len() != fields {
        return Err(XmcError::MalformedHeader(line.trim_end().to_string()));
    }
    Ok(nums)
}

fn parse_pair(tok: &str, line: usize) -> Result<(u64, f64)> {
    let (a, b) = tok.split_once(':').ok_or_else(|| XmcError::Parse {
        line,
        msg: format!("expected id:value, got `{tok}`"),
    })?;
    let id = a.parse::<u64>().map_err(|_| XmcError::Parse {
        line,
        msg: format!("bad id `{a}`"),
    })?;
    let v = b.parse::<f64>().map_err(|_| XmcError::Parse {
        line,
        msg: format!("bad value `{b}`"),
    })?;
    if !v.is_finite() {
        return Err(XmcError::NonFiniteValue { line });
    }
    Ok((id, v))
}

pub fn parse_xc<R: BufRead>(reader: R) -> Result<(Dataset, ParseReport)> {
    let mut lines = reader.lines();
    let h = header(lines.next(), 3)?;
    let (n, v, l) = (h[0], h[1], h[2]);
    let mut report = ParseReport::default();
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (k, raw) in lines.enumerate() {
        let line_no = k + 1;
        let raw = raw.map_err(|e| XmcError::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let text = raw.strip_suffix('\r').unwrap_or(&raw);
        if features.len() == n {
            if text.trim().is_empty() {
                continue;
            }
            return Err(XmcError::RowCount {
                expected: n,
                found: n + 1,
            });
        }
        let (label_part, feat_part) = match text.split_once(' ') {
            Some((a, b)) if !a.contains(':') => (a, b),
            Some(_) => ("", text),
            None if text.contains(':') => ("", text),
            None => (text, ""),
        };
        let mut ls: Vec<LabelId> = Vec::new();
        for t in label_part.split(',').filter(|t| !t.is_empty()) {
            let id = t.parse::<u64>().map_err(|_| XmcError::Parse {
                line: line_no,
                msg: format!("bad label `{t}`"),
            })?;
            if id as usize >= l {
                return Err(XmcError::IndexOutOfRange { line: line_no, id });
            }
            ls.push(id as LabelId);
        }
        let before = ls.len();
        ls.sort_unstable();
        ls.dedup();
        report.duplicate_labels += before - ls.len();

        let mut pairs: Vec<(u32, f64)> = Vec::new();
        for t in feat_part.split_whitespace() {
            let (id, val) = parse_pair(t, line_no)?;
            if id as usize >= v {
                return Err(XmcError::IndexOutOfRange { line: line_no, id });
            }
            pairs.push((id as u32, val));
        }
        pairs.sort_by_key(|p| p.0);
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(XmcError::DuplicateFeature {
                line: line_no,
                id: w[0].0,
            });
        }
        let (idx, vals) = pairs.into_iter().unzip();
        features.push(SparseVector::from_parts(idx, vals)?);
        labels.push(ls);
    }
    if features.len() != n {
        return Err(XmcError::RowCount {
            expected: n,
            found: features.len(),
        });
    }
    Ok((Dataset::new(v, l, features, labels)?, report))
}

pub fn write_xc<W: Write>(d: &Dataset, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{} {} {}", d.num_points(), d.num_features(), d.num_labels())?;
    for i in 0..d.num_points() {
        let ls: Vec<String> = d.point_labels(i).iter().map(u32::to_string).collect();
        write!(w, "{}", ls.join(","))?;
        for (t, v) in d.feature(i).iter() {
            write!(w, " {t}:{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Rows of `(label, score)` pairs over a label space of `num_labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRows {
    pub num_labels: usize,
    pub rows: Vec<Vec<(LabelId, f64)>>,
}

impl ScoredRows {
    pub fn from_shortlist(sl: &Shortlist) -> Self {
        Self {
            num_labels: sl.num_labels,
            rows: sl.rows.iter().map(|r| r.iter().map(|e| (e.label, e.score)).collect()).collect(),
        }
    }

    /// Every true label scored 1.
    pub fn from_truth(d: &Dataset) -> Self {
        Self {
            num_labels: d.num_labels(),
            rows: d.labels().iter().map(|r| r.iter().map(|&l| (l, 1.0)).collect()).collect(),
        }
    }
}

pub fn parse_scored<R: BufRead>(reader: R) -> Result<ScoredRows> {
    let mut lines = reader.lines();
    let h = header(lines.next(), 2)?;
    let (n, l) = (h[0], h[1]);
    let mut rows = Vec::with_capacity(n);
    for (k, raw) in lines.enumerate() {
        let line_no = k + 1;
        let raw = raw.map_err(|e| XmcError::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        if rows.len() == n {
            if raw.trim().is_empty() {
                continue;
            }
            return Err(XmcError::RowCount {
                expected: n,
                found: n + 1,
            });
        }
        let mut row = Vec::new();
        for t in raw.split_whitespace() {
            let (id, s) = parse_pair(t, line_no)?;
            if id as usize >= l {
                return Err(XmcError::IndexOutOfRange { line: line_no, id });
            }
            row.push((id as LabelId, s));
        }
        rows.push(row);
    }
    if rows.len() != n {
        return Err(XmcError::RowCount {
            expected: n,
            found: rows.len(),
        });
    }
    Ok(ScoredRows { num_labels: l, rows })
}

pub fn write_scored<W: Write>(rows: &ScoredRows, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{} {}", rows.rows.len(), rows.num_labels)?;
    for r in &rows.rows {
        let toks: Vec<String> = r.iter().map(|(l, s)| format!("{l}:{s}")).collect();
        writeln!(w, "{}", toks.join(" "))?;
    }
    Ok(())
}
