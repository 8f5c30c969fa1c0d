//! Embedding tables, entity alignment and the word2vec-style text format.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::engine::ImputationResult;
use crate::error::{LsiError, Result};
use crate::geometry::{parse_err, read_bytes, DomainMatrix};

/// Token → vector map with a fixed dimension, iterated in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    tokens: Vec<String>,
    values: Vec<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            tokens: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&k| self.vector(k))
    }

    fn vector(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> + '_ {
        self.tokens
            .iter()
            .enumerate()
            .map(|(k, t)| (t.as_str(), self.vector(k)))
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: &[f64]) -> Result<()> {
        let token = token.into();
        check_token(&token)?;
        if vector.len() != self.dim {
            return Err(LsiError::invalid(format!(
                "token {token:?}: expected {} values, got {}",
                self.dim,
                vector.len()
            )));
        }
        if self.index.contains_key(&token) {
            return Err(LsiError::invalid(format!("duplicate token {token:?}")));
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.values.extend_from_slice(vector);
        Ok(())
    }

    /// Parses the text format: an optional `count dim` header, then one
    /// `token v1 ... vdim` line per entry.
    pub fn from_text(bytes: &[u8], path: &Path) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|e| parse_err(path, 0, e.to_string()))?;
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim_end_matches('\r')))
            .filter(|(_, l)| !l.trim().is_empty())
            .peekable();

        let mut declared = None;
        if let Some(&(_, first)) = lines.peek() {
            let f: Vec<&str> = first.split_ascii_whitespace().collect();
            if let [m, s] = f[..] {
                if let (Ok(m), Ok(s)) = (m.parse::<usize>(), s.parse::<usize>()) {
                    declared = Some((m, s));
                    lines.next();
                }
            }
        }

        let mut table: Option<Self> = declared.map(|(_, s)| Self::new(s));
        let mut row = Vec::new();
        for (line, content) in lines {
            let mut fields = content.split_ascii_whitespace();
            let token = fields.next().expect("non-blank line");
            row.clear();
            for f in fields {
                row.push(
                    f.parse::<f64>()
                        .map_err(|_| parse_err(path, line, format!("bad number {f:?}")))?,
                );
            }
            let t = table.get_or_insert_with(|| Self::new(row.len()));
            if row.len() != t.dim {
                return Err(parse_err(
                    path,
                    line,
                    format!("expected {} values, found {}", t.dim, row.len()),
                ));
            }
            if t.dim == 0 {
                return Err(parse_err(path, line, "no vector values"));
            }
            t.insert(token, &row).map_err(|e| parse_err(path, line, e.to_string()))?;
        }
        let table = table.unwrap_or_else(|| Self::new(0));
        if let Some((m, _)) = declared {
            if m != table.len() {
                return Err(parse_err(
                    path,
                    1,
                    format!("header declares {m} entries, file has {}", table.len()),
                ));
            }
        }
        Ok(table)
    }

    /// Writes the header line and one line per entry, values at 17
    /// significant digits.
    pub fn write_text(&self, out: impl Write) -> Result<()> {
        let mut out = BufWriter::new(out);
        let io = |e| LsiError::io("<embeddings>", e);
        writeln!(out, "{} {}", self.len(), self.dim).map_err(io)?;
        for (token, v) in self.iter() {
            check_token(token)?;
            out.write_all(token.as_bytes()).map_err(io)?;
            for x in v {
                write!(out, " {x:.16e}").map_err(io)?;
            }
            out.write_all(b"\n").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

fn check_token(token: &str) -> Result<()> {
    if token.is_empty() {
        return Err(LsiError::invalid("empty token"));
    }
    if token.chars().any(char::is_whitespace) {
        return Err(LsiError::invalid(format!(
            "token {token:?} contains whitespace and cannot be stored in the text format"
        )));
    }
    Ok(())
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    EmbeddingTable::from_text(&read_bytes(path)?, path)
}

pub fn save_embeddings(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| LsiError::io(path, e))?;
    table.write_text(file).map_err(|e| match e {
        LsiError::Io { source, .. } => LsiError::io(path, source),
        other => other,
    })
}

/// Domain entities reordered so that those with a known embedding come first.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedProblem {
    /// `order[k]` is the original domain row placed at position `k`.
    pub order: Vec<usize>,
    /// Domain matrix with rows in `order`.
    pub x: DomainMatrix,
    /// `p x s` known vectors, row `k` belonging to `x.entities()[k]`.
    pub y_p: Array2<f64>,
    pub p: usize,
    pub q: usize,
}

impl AlignedProblem {
    pub fn n(&self) -> usize {
        self.p + self.q
    }

    pub fn entities(&self) -> &[String] {
        self.x.entities()
    }

    /// Entities whose vectors are to be imputed.
    pub fn missing(&self) -> &[String] {
        &self.x.entities()[self.p..]
    }

    /// `inverse[i]` is the aligned position of original row `i`.
    pub fn inverse_order(&self) -> Vec<usize> {
        let mut inv = vec![0; self.order.len()];
        for (k, &i) in self.order.iter().enumerate() {
            inv[i] = k;
        }
        inv
    }

    /// Maps rows in aligned order back to the original domain order.
    pub fn restore_rows(&self, rows: ArrayView2<'_, f64>) -> Array2<f64> {
        rows.select(ndarray::Axis(0), &self.inverse_order())
    }
}

/// Stable partition of the domain entities into (embedded, missing).
pub fn align(x: &DomainMatrix, table: &EmbeddingTable) -> Result<AlignedProblem> {
    let (present, absent): (Vec<usize>, Vec<usize>) =
        (0..x.n()).partition(|&i| table.contains(&x.entities()[i]));
    let p = present.len();
    if p == 0 {
        return Err(LsiError::NoAnchors);
    }
    let q = absent.len();
    let order: Vec<usize> = present.into_iter().chain(absent).collect();
    let permuted = x.permuted(&order)?;
    let s = table.dim();
    let mut y_p = Array2::zeros((p, s));
    for (k, id) in permuted.entities()[..p].iter().enumerate() {
        let v = table.get(id).expect("partitioned as present");
        y_p.row_mut(k).assign(&ArrayView1::from(v));
    }
    Ok(AlignedProblem {
        order,
        x: permuted,
        y_p,
        p,
        q,
    })
}

/// Returns `table` with the imputed vectors of the missing entities appended.
/// Existing entries are copied unchanged.
pub fn merge_imputed(
    table: &EmbeddingTable,
    problem: &AlignedProblem,
    result: &ImputationResult,
) -> Result<EmbeddingTable> {
    if result.p != problem.p || result.y.nrows() != problem.n() {
        return Err(LsiError::invalid(format!(
            "result has {} rows with {} anchors; problem has {} with {}",
            result.y.nrows(),
            result.p,
            problem.n(),
            problem.p
        )));
    }
    if result.y.ncols() != table.dim() {
        return Err(LsiError::invalid(format!(
            "result dimension {} differs from table dimension {}",
            result.y.ncols(),
            table.dim()
        )));
    }
    let mut out = table.clone();
    for (id, row) in problem.missing().iter().zip(result.imputed().rows()) {
        out.insert(id.clone(), &row.to_vec())?;
    }
    Ok(out)
}

/// Reads an `entity,label` CSV with a header row.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    parse_labels(&bytes, path)
}

pub fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<(String, String)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut out = Vec::new();
    let mut seen = HashMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 2 {
            return Err(parse_err(path, line, format!("expected 2 fields, found {}", rec.len())));
        }
        let (entity, label) = (rec[0].to_string(), rec[1].to_string());
        if entity.is_empty() || label.is_empty() {
            return Err(parse_err(path, line, "empty entity or label"));
        }
        if seen.insert(entity.clone(), line).is_some() {
            return Err(parse_err(path, line, format!("duplicate entity {entity:?}")));
        }
        out.push((entity, label));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn parse(s: &str) -> Result<EmbeddingTable> {
        EmbeddingTable::from_text(s.as_bytes(), Path::new("t.vec"))
    }

    #[test]
    fn header_and_rows() {
        let t = parse("2 3\nfoo 1 2 3\nbar 0.5 -1 1e-3\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("bar").unwrap(), &[0.5, -1.0, 1e-3]);
    }

    #[test]
    fn headerless() {
        let t = parse("foo 1 2\nbar 3 4 \n").unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.tokens(), &["foo".to_string(), "bar".to_string()]);
    }

    #[test]
    fn short_line_reports_line_number() {
        match parse("2 3\nfoo 1 2 3\nbar 1 2\n").unwrap_err() {
            LsiError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn duplicate_token() {
        match parse("a 1\nb 2\na 3\n").unwrap_err() {
            LsiError::Parse { line, msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("duplicate"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn header_count_must_match() {
        assert!(parse("3 1\na 1\nb 2\n").is_err());
    }

    #[test]
    fn empty_table_writes_header_only() {
        let mut buf = Vec::new();
        EmbeddingTable::new(7).write_text(&mut buf).unwrap();
        assert_eq!(buf, b"0 7\n");
        let back = parse("0 7\n").unwrap();
        assert_eq!(back.dim(), 7);
        assert!(back.is_empty());
    }

    #[test]
    fn tokens_with_spaces_are_rejected() {
        let mut t = EmbeddingTable::new(1);
        assert!(t.insert("new york", &[1.0]).is_err());
        assert!(t.insert("", &[1.0]).is_err());
        assert!(t.insert("ny", &[1.0, 2.0]).is_err());
    }

    fn domain(ids: &[&str]) -> DomainMatrix {
        let n = ids.len();
        DomainMatrix::new(
            ids.iter().map(|s| s.to_string()).collect(),
            Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64),
        )
        .unwrap()
    }

    fn table(ids: &[&str]) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(2);
        for (k, id) in ids.iter().enumerate() {
            t.insert(*id, &[k as f64, -(k as f64)]).unwrap();
        }
        t
    }

    #[test]
    fn align_all_present() {
        let a = align(&domain(&["a", "b", "c"]), &table(&["c", "a", "b"])).unwrap();
        assert_eq!((a.p, a.q), (3, 0));
        assert_eq!(a.order, vec![0, 1, 2]);
        assert_eq!(a.y_p, array![[1.0, -1.0], [2.0, -2.0], [0.0, 0.0]]);
    }

    #[test]
    fn align_none_present() {
        assert!(matches!(
            align(&domain(&["a", "b"]), &table(&["x"])),
            Err(LsiError::NoAnchors)
        ));
    }

    #[test]
    fn align_is_stable_partition() {
        let ids = ["e0", "e1", "e2", "e3", "e4", "e5", "e6", "e7", "e8", "e9"];
        let known = ["e7", "e1", "e4", "e8"];
        let a = align(&domain(&ids), &table(&known)).unwrap();
        // Oracle: filter twice in original order.
        let mut expect: Vec<usize> = (0..10).filter(|i| known.contains(&ids[*i])).collect();
        expect.extend((0..10).filter(|i| !known.contains(&ids[*i])));
        assert_eq!(a.order, expect);
        assert_eq!((a.p, a.q), (4, 6));
        assert_eq!(a.missing().len(), 6);
        for (k, &i) in a.order.iter().enumerate() {
            assert_eq!(a.x.row(k), domain(&ids).row(i));
        }
        // Round trip through the inverse permutation.
        let restored = a.restore_rows(a.x.data().view());
        assert_eq!(&restored, domain(&ids).data());
    }

    #[test]
    fn merge_passes_existing_entries_through() {
        let t = table(&["a", "zzz", "c"]);
        let a = align(&domain(&["a", "b", "c", "d"]), &t).unwrap();
        let result = ImputationResult {
            y: array![[0.0, 0.0], [2.0, -2.0], [9.0, 8.0], [7.0, 6.0]],
            iterations: 3,
            final_relative_change: 0.0,
            converged: true,
            p: 2,
        };
        let merged = merge_imputed(&t, &a, &result).unwrap();
        assert_eq!(merged.len(), 5);
        for (tok, v) in t.iter() {
            assert_eq!(merged.get(tok).unwrap(), v);
        }
        assert_eq!(merged.get("b").unwrap(), &[9.0, 8.0]);
        assert_eq!(merged.get("d").unwrap(), &[7.0, 6.0]);
    }

    #[test]
    fn labels_csv() {
        let l = parse_labels(b"entity,label\nAAPL,tech\nXOM,energy\n", Path::new("l")).unwrap();
        assert_eq!(l, vec![("AAPL".into(), "tech".into()), ("XOM".into(), "energy".into())]);
        assert!(parse_labels(b"entity,label\nA,x\nA,y\n", Path::new("l")).is_err());
    }
}
