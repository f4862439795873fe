//! File formats: QAPLIB instances and solutions, Matrix Market patterns,
//! edge lists, and solve reports.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::bandwidth::PatternMatrix;
use crate::enhancements::{EnhanceConfig, Variant};
use crate::error::{Error, Result};
use crate::instance::{scale_instance, QapInstance};
use crate::matrix::{Permutation, SquareMatrix};
use crate::solver::{SolveResult, SolverConfig};

/// Whitespace-separated tokens with their byte offsets.
fn tokens(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split_ascii_whitespace().map(move |t| (t.as_ptr() as usize - text.as_ptr() as usize, t))
}

fn number(offset: usize, tok: &str) -> Result<f64> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::NonNumeric { token: tok.to_string(), offset }),
    }
}

/// Parses `n`, then `n^2` entries of `A` and `n^2` of `B`, row-major.
pub fn parse_qaplib(text: &str) -> Result<(SquareMatrix, SquareMatrix)> {
    let mut toks = tokens(text);
    let Some((off, first)) = toks.next() else {
        return Err(Error::TokenCount { expected: 1, got: 0, offset: 0 });
    };
    let n = first.parse::<usize>().map_err(|_| Error::NonNumeric { token: first.into(), offset: off })?;
    if n == 0 {
        return Err(Error::Parse { offset: off, msg: "dimension must be positive".into() });
    }
    let expected = 2 * n * n;
    let mut vals = Vec::with_capacity(expected);
    for (offset, tok) in toks {
        if vals.len() == expected {
            return Err(Error::TokenCount { expected: expected + 1, got: expected + 2, offset });
        }
        vals.push(number(offset, tok)?);
    }
    if vals.len() != expected {
        return Err(Error::TokenCount { expected: expected + 1, got: vals.len() + 1, offset: text.len() });
    }
    let b = vals.split_off(n * n);
    Ok((SquareMatrix::from_vec(n, vals)?, SquareMatrix::from_vec(n, b)?))
}

/// Inverse of [`parse_qaplib`].
pub fn write_qaplib(a: &SquareMatrix, b: &SquareMatrix) -> String {
    let mut out = format!("{}\n", a.n());
    for m in [a, b] {
        out.push('\n');
        for i in 0..m.n() {
            let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out
}

/// A QAPLIB solution file: `n obj` followed by the 1-based assignment `p`
/// with objective `sum a_ij b_{p(i) p(j)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct QaplibSolution {
    pub obj: f64,
    /// The assignment converted to this crate's convention (`p^{-1}`).
    pub perm: Permutation,
}

pub fn parse_qaplib_solution(text: &str) -> Result<QaplibSolution> {
    let toks: Vec<(usize, &str)> = tokens(text).collect();
    if toks.len() < 2 {
        return Err(Error::TokenCount { expected: 2, got: toks.len(), offset: text.len() });
    }
    let n = toks[0].1.parse::<usize>().map_err(|_| Error::NonNumeric { token: toks[0].1.into(), offset: toks[0].0 })?;
    let obj = number(toks[1].0, toks[1].1)?;
    if toks.len() != n + 2 {
        return Err(Error::TokenCount { expected: n + 2, got: toks.len(), offset: text.len() });
    }
    let mut p = Vec::with_capacity(n);
    for &(offset, tok) in &toks[2..] {
        p.push(tok.parse::<usize>().map_err(|_| Error::NonNumeric { token: tok.into(), offset })?);
    }
    Ok(QaplibSolution { obj, perm: Permutation::from_one_based(&p)?.inverse() })
}

/// Symmetric pattern of a Matrix Market coordinate file. Explicit zeros are
/// dropped and every entry is mirrored.
pub fn parse_matrix_market_pattern(text: &str) -> Result<PatternMatrix> {
    let mut lines = text.lines().enumerate();
    let (_, banner) = lines.next().ok_or(Error::BadHeader { line: 1, msg: "empty file".into() })?;
    let head: Vec<String> = banner.split_whitespace().map(str::to_ascii_lowercase).collect();
    if head.len() != 5 || head[0] != "%%matrixmarket" || head[1] != "matrix" || head[2] != "coordinate" {
        return Err(Error::BadHeader { line: 1, msg: format!("expected a coordinate MatrixMarket banner, got {banner:?}") });
    }
    let field = head[3].as_str();
    if !matches!(field, "pattern" | "real" | "integer" | "complex") {
        return Err(Error::BadHeader { line: 1, msg: format!("unsupported field {field:?}") });
    }
    if !matches!(head[4].as_str(), "general" | "symmetric" | "skew-symmetric" | "hermitian") {
        return Err(Error::BadHeader { line: 1, msg: format!("unsupported symmetry {:?}", head[4]) });
    }
    let mut body = lines.filter(|(_, l)| !l.trim_start().starts_with('%') && !l.trim().is_empty());
    let (size_no, size) = body.next().ok_or(Error::BadHeader { line: 2, msg: "missing size line".into() })?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::BadHeader { line: size_no + 1, msg: format!("bad size line {size:?}") })?;
    if dims.len() != 3 || dims[0] != dims[1] {
        return Err(Error::BadHeader { line: size_no + 1, msg: format!("expected a square 'rows cols nnz' line, got {size:?}") });
    }
    let (n, nnz) = (dims[0], dims[2]);
    let mut edges = Vec::with_capacity(nnz);
    let mut count = 0;
    for (no, line) in body {
        let t: Vec<&str> = line.split_whitespace().collect();
        let need = if field == "pattern" { 2 } else if field == "complex" { 4 } else { 3 };
        if t.len() < need {
            return Err(Error::Parse { offset: no + 1, msg: format!("line {}: expected {need} fields", no + 1) });
        }
        let mut idx = [0usize; 2];
        for k in 0..2 {
            let v = t[k].parse::<usize>().map_err(|_| Error::Parse { offset: no + 1, msg: format!("line {}: bad index {:?}", no + 1, t[k]) })?;
            if v == 0 || v > n {
                return Err(Error::IndexOutOfRange { line: no + 1, index: v, n });
            }
            idx[k] = v - 1;
        }
        let nonzero = match field {
            "pattern" => true,
            "complex" => t[2].parse::<f64>().map(|v| v != 0.0).unwrap_or(true) || t[3].parse::<f64>().map(|v| v != 0.0).unwrap_or(true),
            _ => t[2].parse::<f64>().map_err(|_| Error::Parse { offset: no + 1, msg: format!("line {}: bad value {:?}", no + 1, t[2]) })? != 0.0,
        };
        count += 1;
        if nonzero {
            edges.push((idx[0], idx[1]));
        }
    }
    if count != nnz {
        return Err(Error::Parse { offset: text.len(), msg: format!("expected {nnz} entries, found {count}") });
    }
    PatternMatrix::new(n, edges)
}

/// One `i j` pair per line, 1-based and undirected. `#` and `%` start
/// comments. The dimension is the largest index unless `n` is given.
pub fn parse_edge_list(text: &str, n: Option<usize>) -> Result<PatternMatrix> {
    let mut edges = Vec::new();
    let mut max_idx = 0;
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split(['#', '%']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 2 {
            return Err(Error::Parse { offset: no + 1, msg: format!("line {}: expected 'i j', got {raw:?}", no + 1) });
        }
        let mut idx = [0usize; 2];
        for k in 0..2 {
            let v = t[k].parse::<usize>().map_err(|_| Error::Parse { offset: no + 1, msg: format!("line {}: bad index {:?}", no + 1, t[k]) })?;
            if v == 0 || n.is_some_and(|n| v > n) {
                return Err(Error::IndexOutOfRange { line: no + 1, index: v, n: n.unwrap_or(0) });
            }
            max_idx = max_idx.max(v);
            idx[k] = v - 1;
        }
        edges.push((idx[0], idx[1]));
    }
    PatternMatrix::new(n.unwrap_or(max_idx), edges)
}

/// Reads a pattern from a `.mtx` file or an edge list.
pub fn read_pattern(path: &Path) -> Result<PatternMatrix> {
    let text = fs::read_to_string(path)?;
    if text.trim_start().starts_with("%%MatrixMarket") || path.extension().is_some_and(|e| e == "mtx") {
        parse_matrix_market_pattern(&text)
    } else {
        parse_edge_list(&text, None)
    }
}

fn best_known_table() -> &'static HashMap<String, f64> {
    static TABLE: OnceLock<HashMap<String, f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        include_str!("../data/best_known.tsv")
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .filter_map(|l| {
                let mut it = l.split_whitespace();
                Some((it.next()?.to_string(), it.next()?.parse().ok()?))
            })
            .collect()
    })
}

/// Best known objective of a QAPLIB instance, by name.
pub fn best_known(name: &str) -> Option<f64> {
    best_known_table().get(&name.to_ascii_lowercase()).copied()
}

/// Loads and scales a QAPLIB file; the name is the file stem and the best
/// known value comes from the built-in table.
pub fn read_qaplib(path: &Path) -> Result<QapInstance> {
    let text = fs::read_to_string(path)?;
    let (a, b) = parse_qaplib(&text)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let best = best_known(&name);
    Ok(scale_instance(&a, &b)?.with_name(name).with_obj_best(best))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportFormat {
    #[serde(rename = "jsonl")]
    JsonLines,
    #[serde(rename = "csv")]
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" | "json" | "json-lines" => Ok(ReportFormat::JsonLines),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::InvalidParameter(format!("unknown report format {s:?}"))),
        }
    }
}

/// Everything about one solve needed to rebuild a results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub variant: Variant,
    pub n: usize,
    pub obj: f64,
    pub obj_best: Option<f64>,
    /// Percentage gap rounded to four decimals.
    pub gap: Option<f64>,
    pub config: SolverConfig,
    pub enhance: Option<EnhanceConfig>,
    pub result: SolveResult,
}

pub fn round_gap(g: f64) -> f64 {
    let r = (g * 1e4).round() / 1e4;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

impl Report {
    pub fn new(
        inst: &QapInstance,
        variant: Variant,
        config: &SolverConfig,
        enhance: Option<&EnhanceConfig>,
        result: SolveResult,
    ) -> Self {
        Self {
            name: inst.name.clone(),
            variant,
            n: inst.n(),
            obj: result.f_best,
            obj_best: inst.obj_best,
            gap: result.gap_percent.map(round_gap),
            config: config.clone(),
            enhance: enhance.cloned(),
            result,
        }
    }

    pub fn row(&self) -> ReportRow {
        ReportRow {
            name: self.name.clone(),
            variant: self.variant.to_string(),
            n: self.n,
            obj: self.obj,
            obj_best: self.obj_best,
            gap: self.gap.map(|g| format!("{g:.4}")),
            nfe: self.result.nfe,
            outer_iters: self.result.outer_iters,
            time: format!("{:.3}", self.result.wall_time),
        }
    }
}

/// The flat summary written as CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub variant: String,
    pub n: usize,
    pub obj: f64,
    pub obj_best: Option<f64>,
    pub gap: Option<String>,
    pub nfe: usize,
    pub outer_iters: usize,
    pub time: String,
}

pub const CSV_HEADER: &str = "name,variant,n,obj,obj_best,gap,nfe,outer_iters,time";

pub fn write_reports(reports: &[Report], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::JsonLines => {
            let mut out = String::new();
            for r in reports {
                out.push_str(&serde_json::to_string(r).map_err(|e| Error::Io(e.to_string()))?);
                out.push('\n');
            }
            Ok(out)
        }
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            w.write_record(CSV_HEADER.split(',')).map_err(|e| Error::Io(e.to_string()))?;
            for r in reports {
                w.serialize(r.row()).map_err(|e| Error::Io(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
        }
    }
}

pub fn write_report(r: &Report, format: ReportFormat) -> Result<String> {
    write_reports(std::slice::from_ref(r), format)
}

pub fn parse_reports_jsonl(text: &str) -> Result<Vec<Report>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(line).map_err(|e| Error::Parse { offset, msg: e.to_string() })?);
        }
        offset += line.len();
    }
    Ok(out)
}

pub fn parse_reports_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| Error::Parse { offset: 0, msg: e.to_string() })?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(Error::BadHeader { line: 1, msg: format!("expected {CSV_HEADER:?}") });
    }
    r.deserialize()
        .map(|row| {
            row.map_err(|e| Error::Parse { offset: e.position().map_or(0, |p| p.byte() as usize), msg: e.to_string() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandwidth::bandwidth_of;
    use crate::solver::run_lp;

    #[test]
    fn qaplib_minimal() {
        let (a, b) = parse_qaplib("2 0 1 1 0 0 2 2 0").unwrap();
        assert_eq!(a, SquareMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap());
        assert_eq!(b, SquareMatrix::from_rows(&[vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap());
        assert!(parse_qaplib("2\n\n0 1\n1 0\n\n0 2\n2 0\n\n  \n").is_ok());
    }

    #[test]
    fn qaplib_errors_carry_offsets() {
        assert!(matches!(parse_qaplib("2 0 1 1 0 0 2 2"), Err(Error::TokenCount { .. })));
        assert!(matches!(parse_qaplib("2 0 1 1 0 0 2 2 0 7"), Err(Error::TokenCount { offset: 18, .. })));
        assert_eq!(
            parse_qaplib("2 0 1 x 0 0 2 2 0"),
            Err(Error::NonNumeric { token: "x".into(), offset: 6 })
        );
        assert!(parse_qaplib("").is_err());
        assert!(parse_qaplib("two").is_err());
    }

    #[test]
    fn qaplib_write_parse_idempotent() {
        let a = SquareMatrix::from_fn(4, |i, j| (i * 3 + j) as f64);
        let b = SquareMatrix::from_fn(4, |i, j| (i as f64 - j as f64) * 0.5);
        let text = write_qaplib(&a, &b);
        let (a2, b2) = parse_qaplib(&text).unwrap();
        assert_eq!((a2.clone(), b2.clone()), (a, b));
        assert_eq!(write_qaplib(&a2, &b2), text);
    }

    #[test]
    fn solution_file_converts_convention() {
        let sol = parse_qaplib_solution("3 10\n2 3 1\n").unwrap();
        assert_eq!(sol.obj, 10.0);
        assert_eq!(sol.perm.one_based(), vec![3, 1, 2]);
        assert!(parse_qaplib_solution("3 10 1 2").is_err());
    }

    #[test]
    fn matrix_market_examples() {
        let txt = "%%MatrixMarket matrix coordinate pattern symmetric\n% comment\n3 3 2\n2 1\n3 2\n";
        let p = parse_matrix_market_pattern(txt).unwrap();
        assert_eq!(p.edge_count(), 2);
        assert_eq!(bandwidth_of(&p, None), 1);

        let txt = "%%MatrixMarket matrix coordinate real general\n3 3 3\n1 3 0.0\n1 2 2.5\n2 2 1\n";
        let p = parse_matrix_market_pattern(txt).unwrap();
        assert_eq!(p.edges().collect::<Vec<_>>(), vec![(0, 1)]);

        assert!(matches!(
            parse_matrix_market_pattern("%%MatrixMarket matrix array real general\n2 2\n"),
            Err(Error::BadHeader { line: 1, .. })
        ));
        assert!(matches!(
            parse_matrix_market_pattern("%%MatrixMarket matrix coordinate pattern symmetric\n3 3 1\n4 1\n"),
            Err(Error::IndexOutOfRange { index: 4, n: 3, .. })
        ));
    }

    #[test]
    fn edge_list_examples() {
        let p = parse_edge_list("# path\n1 2\n2 3 % tail\n\n3 4\n", None).unwrap();
        assert_eq!(p.n(), 4);
        assert_eq!(p.edge_count(), 3);
        assert!(parse_edge_list("1 2 3\n", None).is_err());
        assert!(matches!(parse_edge_list("0 2\n", None), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(parse_edge_list("1 9\n", Some(4)), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn best_known_lookup() {
        assert_eq!(best_known("nug12"), Some(578.0));
        assert_eq!(best_known("CHR20C"), Some(14142.0));
        assert_eq!(best_known("nope"), None);
    }

    fn sample_report() -> Report {
        let (a, b) = parse_qaplib("3 0 1 2 1 0 3 2 3 0 0 5 1 5 0 2 1 2 0").unwrap();
        let inst = scale_instance(&a, &b).unwrap().with_name("tiny").with_obj_best(Some(20.0));
        let cfg = SolverConfig { timing: false, ..SolverConfig::default() };
        let res = run_lp(&inst, &cfg).unwrap();
        Report::new(&inst, Variant::Lp, &cfg, None, res)
    }

    #[test]
    fn report_round_trips() {
        let r = sample_report();
        let text = write_report(&r, ReportFormat::JsonLines).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(parse_reports_jsonl(&text).unwrap(), vec![r.clone()]);

        let csv = write_report(&r, ReportFormat::Csv).unwrap();
        assert!(csv.starts_with(&format!("{CSV_HEADER}\n")));
        let rows = parse_reports_csv(&csv).unwrap();
        assert_eq!(rows, vec![r.row()]);
    }

    #[test]
    fn gap_prints_four_decimals() {
        let mut r = sample_report();
        r.gap = Some(round_gap(0.0));
        assert_eq!(r.row().gap.as_deref(), Some("0.0000"));
        r.gap = Some(round_gap(18.215_249));
        assert_eq!(r.row().gap.as_deref(), Some("18.2152"));
        let csv = write_report(&r, ReportFormat::Csv).unwrap();
        assert!(csv.contains(",18.2152,"));
    }
}
