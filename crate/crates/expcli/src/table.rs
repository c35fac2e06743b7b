//! Result rows, CSV persistence and aggregation.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};

pub const RESULT_HEADER: [&str; 13] = [
    "scenario",
    "scheme",
    "sweep_param",
    "sweep_value",
    "sweep_value_si",
    "seed",
    "status",
    "r_total",
    "r_a",
    "sum_r_e",
    "r_c",
    "iterations",
    "wall_time_s",
];

pub const SUMMARY_HEADER: [&str; 14] = [
    "scenario",
    "scheme",
    "sweep_param",
    "sweep_value",
    "sweep_value_si",
    "trials",
    "r_total_mean",
    "r_total_std",
    "r_a_mean",
    "r_a_std",
    "sum_r_e_mean",
    "sum_r_e_std",
    "r_c_mean",
    "r_c_std",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// The solver returned a point that violates a constraint.
    Infeasible,
    /// The trial raised an error; metrics are empty.
    Error,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::Infeasible => "infeasible",
            Self::Error => "error",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "ok" => Some(Self::Ok),
            "infeasible" => Some(Self::Infeasible),
            "error" => Some(Self::Error),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub scheme: String,
    pub sweep_param: String,
    pub sweep_value: f64,
    pub sweep_value_si: f64,
    pub seed: u64,
    pub status: Status,
    pub r_total: Option<f64>,
    pub r_a: Option<f64>,
    pub sum_r_e: Option<f64>,
    pub r_c: Option<f64>,
    pub iterations: Option<usize>,
    pub wall_time_s: Option<f64>,
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl ResultRow {
    fn record(&self) -> Vec<String> {
        vec![
            self.scenario.clone(),
            self.scheme.clone(),
            self.sweep_param.clone(),
            fmt_f64(self.sweep_value),
            fmt_f64(self.sweep_value_si),
            self.seed.to_string(),
            self.status.as_str().to_string(),
            opt(self.r_total),
            opt(self.r_a),
            opt(self.sum_r_e),
            opt(self.r_c),
            opt(self.iterations),
            opt(self.wall_time_s),
        ]
    }

    fn from_record(rec: &csv::StringRecord) -> std::result::Result<Self, String> {
        if rec.len() != RESULT_HEADER.len() {
            return Err(format!("expected {} fields, found {}", RESULT_HEADER.len(), rec.len()));
        }
        let num = |i: usize| -> std::result::Result<f64, String> {
            rec[i].parse::<f64>().map_err(|_| format!("{}: '{}' is not a number", RESULT_HEADER[i], &rec[i]))
        };
        let maybe = |i: usize| -> std::result::Result<Option<f64>, String> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        let seed = rec[5].parse::<u64>().map_err(|_| format!("seed: '{}' is not an integer", &rec[5]))?;
        let status = Status::parse(&rec[6]).ok_or_else(|| format!("status: unknown value '{}'", &rec[6]))?;
        let iterations = if rec[11].is_empty() {
            None
        } else {
            Some(rec[11].parse::<usize>().map_err(|_| format!("iterations: '{}' is not an integer", &rec[11]))?)
        };
        Ok(Self {
            scenario: rec[0].to_string(),
            scheme: rec[1].to_string(),
            sweep_param: rec[2].to_string(),
            sweep_value: num(3)?,
            sweep_value_si: num(4)?,
            seed,
            status,
            r_total: maybe(7)?,
            r_a: maybe(8)?,
            sum_r_e: maybe(9)?,
            r_c: maybe(10)?,
            iterations,
            wall_time_s: maybe(12)?,
        })
    }
}

/// Writes a `#`-prefixed comment line, the header and the records.
fn write_csv(path: &Path, comment: &str, header: &[&str], records: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut file = File::create(path).map_err(io)?;
    writeln!(file, "# {}", comment.replace('\n', " ")).map_err(io)?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::io(path, e.into());
    w.write_record(header).map_err(csv_err)?;
    for r in records {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush().map_err(io)
}

pub fn write_results(path: &Path, provenance: &str, rows: &[ResultRow]) -> Result<()> {
    write_csv(path, provenance, &RESULT_HEADER, rows.iter().map(ResultRow::record))
}

/// First line of the file with the `# ` prefix removed, if it is a comment.
pub fn read_provenance(path: &Path) -> Result<Option<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut line = String::new();
    BufReader::new(file).read_line(&mut line).map_err(|e| Error::io(path, e))?;
    Ok(line.strip_prefix('#').map(|s| s.trim().to_string()))
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).flexible(true).from_reader(file);
    let malformed = |line: u64, message: String| Error::Malformed { path: path.to_path_buf(), line, message };
    let header = reader.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    if header.iter().ne(RESULT_HEADER.iter().copied()) {
        let line = reader.position().line().saturating_sub(1).max(1);
        return Err(malformed(line, format!("header does not match '{}'", RESULT_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push(ResultRow::from_record(&rec).map_err(|m| malformed(line, m))?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub scheme: String,
    pub sweep_param: String,
    pub sweep_value: f64,
    pub sweep_value_si: f64,
    /// Rows with status `ok` that entered the statistics.
    pub trials: usize,
    pub r_total: Stat,
    pub r_a: Stat,
    pub sum_r_e: Stat,
    pub r_c: Stat,
}

/// Mean and sample standard deviation; `None` when no value was present.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: None, std: None };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean: Some(mean), std: Some(std) }
    }
}

/// Groups `ok` rows by (scenario, scheme, sweep value). The output is sorted
/// by scenario, scheme and sweep value, so it does not depend on row order.
/// Groups without a usable row are dropped with a warning.
pub fn aggregate(rows: &[ResultRow]) -> Vec<SummaryRow> {
    type Key = (String, String, String, u64);
    let mut groups: BTreeMap<Key, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        // Ordered key for f64 sweep values.
        let bits = r.sweep_value.to_bits() ^ (((r.sweep_value.to_bits() as i64) >> 63) as u64 | (1 << 63));
        groups.entry((r.scenario.clone(), r.scheme.clone(), r.sweep_param.clone(), bits)).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((scenario, scheme, sweep_param, _), mut members) in groups {
        // Fixed summation order, whatever the file order.
        members.sort_by_key(|r| r.seed);
        let ok: Vec<&ResultRow> = members.iter().copied().filter(|r| r.status == Status::Ok).collect();
        let first = members[0];
        if ok.is_empty() {
            warn!("{scenario}/{scheme} at {sweep_param}={}: no successful trials, group omitted", first.sweep_value);
            continue;
        }
        let stat = |f: fn(&ResultRow) -> Option<f64>| Stat::of(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
        out.push(SummaryRow {
            scenario,
            scheme,
            sweep_param,
            sweep_value: first.sweep_value,
            sweep_value_si: first.sweep_value_si,
            trials: ok.len(),
            r_total: stat(|r| r.r_total),
            r_a: stat(|r| r.r_a),
            sum_r_e: stat(|r| r.sum_r_e),
            r_c: stat(|r| r.r_c),
        });
    }
    out
}

impl SummaryRow {
    fn record(&self) -> Vec<String> {
        let mut rec = vec![
            self.scenario.clone(),
            self.scheme.clone(),
            self.sweep_param.clone(),
            fmt_f64(self.sweep_value),
            fmt_f64(self.sweep_value_si),
            self.trials.to_string(),
        ];
        for s in [self.r_total, self.r_a, self.sum_r_e, self.r_c] {
            rec.push(opt(s.mean));
            rec.push(opt(s.std));
        }
        rec
    }
}

pub fn write_summary(path: &Path, comment: &str, rows: &[SummaryRow]) -> Result<()> {
    write_csv(path, comment, &SUMMARY_HEADER, rows.iter().map(SummaryRow::record))
}

/// Reads a result CSV and writes its summary, carrying the provenance line.
pub fn aggregate_file(input: &Path, output: &Path) -> Result<Vec<SummaryRow>> {
    let rows = read_results(input)?;
    let summary = aggregate(&rows);
    let source = read_provenance(input)?.unwrap_or_default();
    write_summary(output, &format!("aggregate of {source}"), &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(scheme: &str, value: f64, seed: u64, r: Option<f64>) -> ResultRow {
        ResultRow {
            scenario: "vs_n".into(),
            scheme: scheme.into(),
            sweep_param: "n".into(),
            sweep_value: value,
            sweep_value_si: value,
            seed,
            status: if r.is_some() { Status::Ok } else { Status::Error },
            r_total: r,
            r_a: r,
            sum_r_e: None,
            r_c: r,
            iterations: Some(3),
            wall_time_s: None,
        }
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1e-28, 4_302_555.123_456_7, -80.0, f64::MIN_POSITIVE, 1e300] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn statistics() {
        let s = Stat::of(&[1.0, 3.0]);
        assert_eq!(s.mean, Some(2.0));
        assert!((s.std.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(Stat::of(&[5.0]), Stat { mean: Some(5.0), std: Some(0.0) });
        assert_eq!(Stat::of(&[]).mean, None);
    }

    #[test]
    fn aggregation_ignores_order_and_drops_empty_groups() {
        let rows = vec![
            row("optimize", 20.0, 1, Some(3.0)),
            row("optimize", 10.0, 1, Some(1.0)),
            row("optimize", 10.0, 2, Some(3.0)),
            row("no_irs", 10.0, 1, None),
        ];
        let mut rev = rows.clone();
        rev.reverse();
        let a = aggregate(&rows);
        assert_eq!(a, aggregate(&rev));
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].sweep_value, 10.0);
        assert_eq!(a[0].r_total.mean, Some(2.0));
        assert_eq!(a[0].sum_r_e.mean, None);
        assert_eq!(a[1].trials, 1);
    }

    #[test]
    fn negative_sweep_values_sort_numerically() {
        let rows = vec![
            row("optimize", 5.0, 1, Some(1.0)),
            row("optimize", -5.0, 1, Some(1.0)),
            row("optimize", 0.0, 1, Some(1.0)),
        ];
        let values: Vec<f64> = aggregate(&rows).iter().map(|r| r.sweep_value).collect();
        assert_eq!(values, vec![-5.0, 0.0, 5.0]);
    }
}
