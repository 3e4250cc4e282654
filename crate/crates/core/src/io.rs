//! Plain-text formats for graphs, kernels and datasets.
//!
//! * Graphs: Matrix Market coordinate files (`real`, `integer` or `pattern`;
//!   `general` or `symmetric`), or a dense whitespace-separated weight matrix.
//! * Kernels: a first line `m <m>` followed by `m` rows of `m` numbers.
//! * Datasets: CSV with header `u,v,y` and zero-based vertex indices.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::kernel::SymmetricKernel;
use crate::linalg::Mat;
use crate::sampling::{Dataset, Sample};
use crate::scalar::Real;

fn parse_num<T: Real>(tok: &str, line: usize) -> Result<T> {
    tok.parse::<f64>()
        .map(T::lit)
        .map_err(|_| Error::Parse(format!("line {line}: bad number `{tok}`")))
}

fn parse_index(tok: &str, line: usize) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| Error::Parse(format!("line {line}: bad index `{tok}`")))
}

fn parse_mm<T: Real>(header: &str, lines: &mut dyn Iterator<Item = (usize, String)>) -> Result<WeightedGraph<T>> {
    let h = header.to_ascii_lowercase();
    let fields: Vec<&str> = h.split_whitespace().collect();
    if fields.len() < 5 || fields[1] != "matrix" || fields[2] != "coordinate" {
        return Err(Error::Parse("only coordinate Matrix Market files are supported".into()));
    }
    let pattern = fields[3] == "pattern";
    if !pattern && fields[3] != "real" && fields[3] != "integer" {
        return Err(Error::Parse(format!("unsupported field type `{}`", fields[3])));
    }
    let symmetric = match fields[4] {
        "symmetric" => true,
        "general" => false,
        other => return Err(Error::Parse(format!("unsupported symmetry `{other}`"))),
    };
    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (ln, size) = body
        .next()
        .ok_or_else(|| Error::Parse("missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| parse_index(t, ln))
        .collect::<Result<_>>()?;
    if dims.len() != 3 || dims[0] != dims[1] {
        return Err(Error::Parse(format!("line {ln}: expected `m m nnz`")));
    }
    let (m, nnz) = (dims[0], dims[2]);
    let mut w = Mat::zeros(m, m);
    let mut seen = 0;
    for (ln, line) in body {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let need = if pattern { 2 } else { 3 };
        if toks.len() < need {
            return Err(Error::Parse(format!("line {ln}: expected {need} fields")));
        }
        let i = parse_index(toks[0], ln)?;
        let j = parse_index(toks[1], ln)?;
        if i == 0 || j == 0 || i > m || j > m {
            return Err(Error::Parse(format!("line {ln}: index out of range")));
        }
        let x: T = if pattern { T::one() } else { parse_num(toks[2], ln)? };
        w[(i - 1, j - 1)] = x;
        if symmetric {
            w[(j - 1, i - 1)] = x;
        }
        seen += 1;
    }
    if seen != nnz {
        return Err(Error::Parse(format!("expected {nnz} entries, found {seen}")));
    }
    WeightedGraph::new(w)
}

fn parse_dense<T: Real>(rows: Vec<(usize, String)>) -> Result<Mat<T>> {
    let parsed: Vec<Vec<T>> = rows
        .iter()
        .map(|(ln, l)| l.split_whitespace().map(|t| parse_num(t, *ln)).collect())
        .collect::<Result<_>>()?;
    Mat::from_rows(&parsed)
}

/// Reads a graph in either supported format.
pub fn read_graph<T: Real>(path: impl AsRef<Path>) -> Result<WeightedGraph<T>> {
    let text = fs::read_to_string(path)?;
    parse_graph(&text)
}

pub fn parse_graph<T: Real>(text: &str) -> Result<WeightedGraph<T>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.to_string()));
    let first = text.lines().next().unwrap_or("");
    if first.starts_with("%%MatrixMarket") {
        lines.next();
        return parse_mm(first, &mut lines);
    }
    let rows: Vec<(usize, String)> = lines
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .collect();
    WeightedGraph::new(parse_dense(rows)?)
}

/// Writes the upper triangle of the weights as a symmetric Matrix Market file.
pub fn write_graph<T: Real>(graph: &WeightedGraph<T>, mut out: impl Write) -> Result<()> {
    let m = graph.m();
    let w = graph.weights();
    let entries: Vec<(usize, usize, T)> = (0..m)
        .flat_map(|j| (j..m).map(move |i| (i, j)))
        .filter(|&(i, j)| w[(i, j)] != T::zero())
        .map(|(i, j)| (i, j, w[(i, j)]))
        .collect();
    writeln!(out, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(out, "{m} {m} {}", entries.len())?;
    for (i, j, x) in entries {
        writeln!(out, "{} {} {}", i + 1, j + 1, x.as_f64())?;
    }
    Ok(())
}

pub fn write_kernel<T: Real>(kernel: &SymmetricKernel<T>, mut out: impl Write) -> Result<()> {
    let m = kernel.m();
    writeln!(out, "m {m}")?;
    for u in 0..m {
        let row: Vec<String> = kernel.as_mat().row(u).iter().map(|x| x.as_f64().to_string()).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

pub fn read_kernel<T: Real>(input: impl Read) -> Result<SymmetricKernel<T>> {
    let mut lines = BufReader::new(input).lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty kernel file".into()))?;
    let header = header?;
    let m = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["m", m] => parse_index(m, 1)?,
        _ => return Err(Error::Parse("kernel file must start with `m <m>`".into())),
    };
    let mut rows = Vec::with_capacity(m);
    for (ln, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push((ln, line));
    }
    let mat: Mat<T> = parse_dense(rows)?;
    if mat.rows() != m || mat.cols() != m {
        return Err(Error::Dimension { expected: m, found: mat.rows() });
    }
    SymmetricKernel::new(mat)
}

#[derive(Serialize, Deserialize)]
struct Row {
    u: usize,
    v: usize,
    y: f64,
}

pub fn write_dataset<T: Real>(data: &Dataset<T>, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in data.samples() {
        w.serialize(Row { u: s.u, v: s.v, y: s.y.as_f64() })
            .map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<T: Real>(input: impl Read, m: usize, a: T) -> Result<Dataset<T>> {
    let mut r = csv::Reader::from_reader(input);
    let samples = r
        .deserialize::<Row>()
        .map(|row| {
            let row = row.map_err(|e| Error::Parse(e.to_string()))?;
            Ok(Sample { u: row.u, v: row.v, y: T::lit(row.y) })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, m, a)
}
