//! Distances and affinity structures on the domain matrix.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::error::{LsiError, Result};
use crate::par;

/// Default cap on the fraction of missing observations per entity in a
/// returns table.
pub const DEFAULT_MAX_MISSING_FRACTION: f64 = 0.20;

/// `n` entities described by `d`-dimensional feature vectors in the affinity
/// space. Row `i` belongs to `entities[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainMatrix {
    entities: Vec<String>,
    data: Array2<f64>,
}

impl DomainMatrix {
    pub fn new(entities: Vec<String>, data: Array2<f64>) -> Result<Self> {
        let (n, d) = data.dim();
        if entities.len() != n {
            return Err(LsiError::invalid(format!(
                "{} entity ids for {} rows",
                entities.len(),
                n
            )));
        }
        if n < 2 {
            return Err(LsiError::invalid(format!(
                "domain matrix needs at least 2 entities, got {n}"
            )));
        }
        if d < 1 {
            return Err(LsiError::invalid("domain matrix has zero columns"));
        }
        let mut seen = HashSet::with_capacity(n);
        for e in &entities {
            if !seen.insert(e.as_str()) {
                return Err(LsiError::invalid(format!("duplicate entity id {e:?}")));
            }
        }
        for (i, row) in data.rows().into_iter().enumerate() {
            if let Some(col) = row.iter().position(|v| !v.is_finite()) {
                return Err(LsiError::NonFinite {
                    row: i,
                    entity: entities[i].clone(),
                    col,
                });
            }
        }
        Ok(Self { entities, data })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    /// Returns a copy with rows reordered so that row `k` of the result is
    /// row `order[k]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let n = self.n();
        if order.len() != n {
            return Err(LsiError::invalid("permutation length mismatch"));
        }
        let mut seen = vec![false; n];
        for &i in order {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(LsiError::invalid("not a permutation"));
            }
        }
        let data = self.data.select(ndarray::Axis(0), order);
        let entities = order.iter().map(|&i| self.entities[i].clone()).collect();
        Ok(Self { entities, data })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = read_bytes(path)?;
        Self::from_csv_bytes(&bytes, path)
    }

    pub fn from_csv_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let rows = parse_csv(bytes, path)?;
        let mut entities = Vec::with_capacity(rows.len());
        let mut values = Vec::new();
        let mut width = None;
        for (line, id, cells) in rows {
            let w = *width.get_or_insert(cells.len());
            if cells.len() != w {
                return Err(parse_err(
                    path,
                    line,
                    format!("expected {} values, found {}", w, cells.len()),
                ));
            }
            for (c, cell) in cells.iter().enumerate() {
                let v = parse_float(cell)
                    .ok_or_else(|| parse_err(path, line, format!("column {}: {cell:?}", c + 1)))?;
                values.push(v);
            }
            entities.push(id);
        }
        let n = entities.len();
        let data = Array2::from_shape_vec((n, width.unwrap_or(0)), values)
            .map_err(|e| LsiError::invalid(e.to_string()))?;
        Self::new(entities, data)
    }

    /// Writes `entity,v1,...,vd` lines without a header, 17 significant digits.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(&mut out);
        for (id, row) in self.entities.iter().zip(self.data.rows()) {
            let mut rec = Vec::with_capacity(row.len() + 1);
            rec.push(id.clone());
            rec.extend(row.iter().map(|v| format_f64(*v)));
            w.write_record(&rec)?;
        }
        w.flush()
    }
}

/// Symmetric `n x n` matrix of pairwise Euclidean distances, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Wraps raw row-major values, checking symmetry, zero diagonal and
    /// non-negativity.
    pub fn from_row_major(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(LsiError::invalid("distance matrix must be n x n"));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(LsiError::invalid(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !v.is_finite() || v < 0.0 || v != values[j * n + i] {
                    return Err(LsiError::invalid(format!(
                        "entry ({i}, {j}) breaks symmetry or non-negativity"
                    )));
                }
            }
        }
        Ok(Self { n, values })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// Pairwise `‖x_i − x_j‖₂` over the rows of `x`.
///
/// Every entry is evaluated directly from coordinate differences, so row `i`
/// and column `i` agree bit for bit and the result is independent of thread
/// count.
pub fn euclidean_distance_matrix(x: &DomainMatrix) -> DistanceMatrix {
    let n = x.n();
    let data = x.data();
    let mut values = vec![0.0; n * n];
    par::for_each_chunk_mut(&mut values, n, |i, out| {
        let xi = data.row(i);
        for (j, slot) in out.iter_mut().enumerate() {
            if i != j {
                *slot = euclidean(xi, data.row(j));
            }
        }
    });
    DistanceMatrix { n, values }
}

#[inline]
pub(crate) fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    squared_euclidean(a, b).sqrt()
}

#[inline]
pub(crate) fn squared_euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| {
            let t = x - y;
            t * t
        })
        .sum()
}

/// Per-entity time series with optional gaps, e.g. daily returns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsTable {
    pub entities: Vec<String>,
    /// `values[i][t]`; `None` marks a missing observation.
    pub values: Vec<Vec<Option<f64>>>,
}

impl ReturnsTable {
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = read_bytes(path)?;
        Self::from_csv_bytes(&bytes, path)
    }

    pub fn from_csv_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let rows = parse_csv(bytes, path)?;
        let mut entities = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len());
        let mut width = None;
        for (line, id, cells) in rows {
            let w = *width.get_or_insert(cells.len());
            if cells.len() != w {
                return Err(parse_err(
                    path,
                    line,
                    format!("expected {} values, found {}", w, cells.len()),
                ));
            }
            let row = cells
                .iter()
                .enumerate()
                .map(|(c, cell)| {
                    if cell.trim().is_empty() {
                        Ok(None)
                    } else {
                        parse_float(cell)
                            .map(Some)
                            .ok_or_else(|| parse_err(path, line, format!("column {}: {cell:?}", c + 1)))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            entities.push(id);
            values.push(row);
        }
        Ok(Self { entities, values })
    }
}

/// Builds an `n x n` domain matrix whose rows are rows of the Pearson
/// correlation matrix of the (gap-filled) return series.
///
/// Entities with more than `max_missing_fraction` missing observations are
/// dropped. Remaining gaps are filled with the per-column mean of the observed
/// values among retained entities.
pub fn correlation_domain_matrix(
    returns: &ReturnsTable,
    max_missing_fraction: f64,
) -> Result<DomainMatrix> {
    if !(0.0..=1.0).contains(&max_missing_fraction) {
        return Err(LsiError::invalid(format!(
            "max_missing_fraction must lie in [0, 1], got {max_missing_fraction}"
        )));
    }
    if returns.entities.len() != returns.values.len() {
        return Err(LsiError::invalid("entity count does not match row count"));
    }
    let t_len = returns.values.first().map_or(0, Vec::len);
    if t_len < 2 {
        return Err(LsiError::invalid(format!(
            "need at least 2 observations per entity, got {t_len}"
        )));
    }
    if returns.values.iter().any(|r| r.len() != t_len) {
        return Err(LsiError::invalid("ragged returns table"));
    }

    let kept: Vec<usize> = (0..returns.values.len())
        .filter(|&i| {
            let missing = returns.values[i].iter().filter(|v| v.is_none()).count();
            (missing as f64) <= max_missing_fraction * t_len as f64
        })
        .collect();

    let mut col_mean = vec![0.0; t_len];
    for (t, mean) in col_mean.iter_mut().enumerate() {
        let (sum, count) = kept
            .iter()
            .filter_map(|&i| returns.values[i][t])
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        if count == 0 {
            return Err(LsiError::invalid(format!(
                "column {} has no observed values",
                t + 1
            )));
        }
        *mean = sum / count as f64;
    }

    // Centered, unit-norm rows: correlation is then a plain dot product.
    let mut z = Vec::with_capacity(kept.len());
    for &i in &kept {
        let row: Vec<f64> = returns.values[i]
            .iter()
            .zip(&col_mean)
            .map(|(v, m)| v.unwrap_or(*m))
            .collect();
        if let Some(t) = row.iter().position(|v| !v.is_finite()) {
            return Err(LsiError::NonFinite {
                row: i,
                entity: returns.entities[i].clone(),
                col: t,
            });
        }
        let mean = row.iter().sum::<f64>() / t_len as f64;
        let centered: Vec<f64> = row.iter().map(|v| v - mean).collect();
        let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(LsiError::invalid(format!(
                "entity {:?} has zero variance; correlation undefined",
                returns.entities[i]
            )));
        }
        z.push(centered.into_iter().map(|v| v / norm).collect::<Vec<_>>());
    }

    let n = kept.len();
    let values = par::map_range(n * n, |k| {
        let (i, j) = (k / n, k % n);
        if i == j {
            1.0
        } else {
            let r: f64 = z[i].iter().zip(&z[j]).map(|(a, b)| a * b).sum();
            r.clamp(-1.0, 1.0)
        }
    });
    let data = Array2::from_shape_vec((n, n), values).expect("n x n");
    let entities = kept.iter().map(|&i| returns.entities[i].clone()).collect();
    DomainMatrix::new(entities, data)
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| LsiError::io(path, e))?;
    Ok(buf)
}

pub(crate) fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> LsiError {
    LsiError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub(crate) fn parse_float(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

/// Shortest representation that round-trips, at most 17 significant digits.
pub(crate) fn format_f64(v: f64) -> String {
    // `{}` on f64 prints the shortest string that parses back to the same
    // value, which never needs more than 17 significant digits.
    format!("{v}")
}

/// Parses `id,cell,cell,...` records. A first record whose second field is
/// not numeric (and not empty) is treated as a header and skipped.
fn parse_csv(bytes: &[u8], path: &Path) -> Result<Vec<(usize, String, Vec<String>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut rows = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(k + 1, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(k + 1, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if k == 0 {
            let second = rec.get(1).unwrap_or("");
            if !second.is_empty() && parse_float(second).is_none() {
                continue;
            }
        }
        let id = rec.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(parse_err(path, line, "empty entity id"));
        }
        rows.push((line, id, rec.iter().skip(1).map(str::to_string).collect()));
    }
    Ok(rows)
}
