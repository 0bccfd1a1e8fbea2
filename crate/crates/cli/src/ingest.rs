//! CSV ingestion of curves and responses.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use flmm::basis::Interval;
use flmm::design::{Dataset, FunctionalSample, Subject, Visit};

use crate::error::CliError;

/// Row and group counts of an ingested dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestSummary {
    pub curve_rows: usize,
    pub response_rows: usize,
    pub subjects: usize,
    pub visits: usize,
}

#[derive(Debug)]
struct VisitRows {
    first_line: u64,
    t: Vec<f64>,
    x: Vec<f64>,
    lines: HashMap<u64, u64>,
}

type Key = (String, String);

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn columns(path: &Path, rdr: &mut csv::Reader<std::fs::File>, want: &[&str]) -> Result<Vec<usize>, CliError> {
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    want.iter()
        .map(|w| {
            headers.iter().position(|h| h == *w).ok_or_else(|| CliError::Data {
                path: path.to_path_buf(),
                msg: format!(
                    "missing column `{w}` (header: {})",
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            })
        })
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    CliError::Input {
        path: path.to_path_buf(),
        line,
        msg: e.to_string(),
    }
}

fn number(path: &Path, line: u64, field: &str, raw: &str) -> Result<f64, CliError> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::Input {
            path: path.to_path_buf(),
            line,
            msg: format!("non-numeric {field} `{raw}`"),
        }),
    }
}

fn text(path: &Path, line: u64, field: &str, raw: &str) -> Result<String, CliError> {
    if raw.is_empty() {
        Err(CliError::Input {
            path: path.to_path_buf(),
            line,
            msg: format!("empty {field}"),
        })
    } else {
        Ok(raw.to_string())
    }
}

fn read_curve_rows(path: &Path) -> Result<(BTreeMap<Key, VisitRows>, usize), CliError> {
    let mut rdr = reader(path)?;
    let col = columns(path, &mut rdr, &["subject_id", "visit_id", "t", "x"])?;
    let mut visits: BTreeMap<Key, VisitRows> = BTreeMap::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let s = text(path, line, "subject_id", &rec[col[0]])?;
        let v = text(path, line, "visit_id", &rec[col[1]])?;
        let t = number(path, line, "t", &rec[col[2]])?;
        let x = number(path, line, "x", &rec[col[3]])?;
        rows += 1;
        let entry = visits.entry((s.clone(), v.clone())).or_insert_with(|| VisitRows {
            first_line: line,
            t: Vec::new(),
            x: Vec::new(),
            lines: HashMap::new(),
        });
        let bits = (t + 0.0).to_bits();
        if let Some(first) = entry.lines.get(&bits) {
            return Err(CliError::Input {
                path: path.to_path_buf(),
                line,
                msg: format!("duplicate row for ({s}, {v}, t = {t}), first given on line {first}"),
            });
        }
        if let Some(&last) = entry.t.last() {
            if t < last {
                return Err(CliError::Input {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("non-monotone t for ({s}, {v}): {t} follows {last}"),
                });
            }
        }
        entry.lines.insert(bits, line);
        entry.t.push(t);
        entry.x.push(x);
    }
    for ((s, v), rows) in &visits {
        if rows.t.len() < 2 {
            return Err(CliError::Input {
                path: path.to_path_buf(),
                line: rows.first_line,
                msg: format!("curve ({s}, {v}) has fewer than two points"),
            });
        }
    }
    Ok((visits, rows))
}

fn resolve_domain(path: &Path, visits: &BTreeMap<Key, VisitRows>, domain: Option<Interval>) -> Result<Interval, CliError> {
    let lo = visits.values().map(|r| r.t[0]).fold(f64::INFINITY, f64::min);
    let hi = visits.values().map(|r| r.t[r.t.len() - 1]).fold(f64::NEG_INFINITY, f64::max);
    let d = match domain {
        Some(d) => d,
        None => Interval::new(lo, hi).map_err(|e| CliError::Data {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?,
    };
    for ((s, v), rows) in visits {
        for (t, line) in rows.t.iter().map(|t| (t, rows.lines[&(t + 0.0).to_bits()])) {
            if !d.contains(*t) {
                return Err(CliError::Input {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("t = {t} for ({s}, {v}) lies outside the domain [{}, {}]", d.lo, d.hi),
                });
            }
        }
    }
    Ok(d)
}

/// Reads a curves CSV (`subject_id,visit_id,t,x`) into curves sorted by
/// subject then visit, and the domain they live on.
pub fn ingest_curves(path: &Path, domain: Option<Interval>) -> Result<(Vec<FunctionalSample>, Interval, usize), CliError> {
    let (visits, rows) = read_curve_rows(path)?;
    if visits.is_empty() {
        return Err(CliError::Data {
            path: path.to_path_buf(),
            msg: "no curve rows".into(),
        });
    }
    let d = resolve_domain(path, &visits, domain)?;
    let curves = visits
        .into_iter()
        .map(|((s, v), r)| FunctionalSample::new(s, v, r.t, r.x))
        .collect();
    Ok((curves, d, rows))
}

/// Joins a curves CSV with a responses CSV (`subject_id,visit_id,y`).
pub fn ingest_dataset(
    curves_path: &Path,
    responses_path: &Path,
    domain: Option<Interval>,
) -> Result<(Dataset, IngestSummary), CliError> {
    let (visits, curve_rows) = read_curve_rows(curves_path)?;
    let mut rdr = reader(responses_path)?;
    let col = columns(responses_path, &mut rdr, &["subject_id", "visit_id", "y"])?;
    let mut responses: BTreeMap<Key, (u64, f64)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(responses_path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let s = text(responses_path, line, "subject_id", &rec[col[0]])?;
        let v = text(responses_path, line, "visit_id", &rec[col[1]])?;
        let y = number(responses_path, line, "y", &rec[col[2]])?;
        if let Some((first, _)) = responses.insert((s.clone(), v.clone()), (line, y)) {
            return Err(CliError::Input {
                path: responses_path.to_path_buf(),
                line,
                msg: format!("duplicate response for ({s}, {v}), first given on line {first}"),
            });
        }
    }
    for ((s, v), (line, _)) in &responses {
        if !visits.contains_key(&(s.clone(), v.clone())) {
            return Err(CliError::Input {
                path: responses_path.to_path_buf(),
                line: *line,
                msg: format!("orphan response: no curve for ({s}, {v})"),
            });
        }
    }
    for ((s, v), rows) in &visits {
        if !responses.contains_key(&(s.clone(), v.clone())) {
            return Err(CliError::Input {
                path: curves_path.to_path_buf(),
                line: rows.first_line,
                msg: format!("orphan visit: curve ({s}, {v}) has no response"),
            });
        }
    }
    if visits.is_empty() {
        return Err(CliError::Data {
            path: curves_path.to_path_buf(),
            msg: "no curve rows".into(),
        });
    }
    let d = resolve_domain(curves_path, &visits, domain)?;
    let response_rows = responses.len();
    let mut subjects: Vec<Subject> = Vec::new();
    for ((s, v), rows) in visits {
        let y = responses[&(s.clone(), v.clone())].1;
        let visit = Visit {
            y,
            curve: FunctionalSample::new(s.clone(), v, rows.t, rows.x),
        };
        match subjects.last_mut() {
            Some(last) if last.id == s => last.visits.push(visit),
            _ => subjects.push(Subject {
                id: s,
                visits: vec![visit],
            }),
        }
    }
    let dataset = Dataset { subjects, domain: d };
    dataset.validate().map_err(|e| CliError::Data {
        path: curves_path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let summary = IngestSummary {
        curve_rows,
        response_rows,
        subjects: dataset.n_subjects(),
        visits: dataset.total_visits(),
    };
    Ok((dataset, summary))
}
