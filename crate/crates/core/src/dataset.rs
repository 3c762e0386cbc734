//! Entities: a dense row-major vector block plus a columnar attribute table.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::distance::Metric;
use crate::error::{Error, Result};

/// A single structured attribute value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrValue {
    Int(i64),
    /// Days since 1970-01-01.
    Date(i64),
    Keywords(Vec<String>),
    Text(String),
}

impl AttrValue {
    pub fn kind(&self) -> AttrKind {
        match self {
            AttrValue::Int(_) => AttrKind::Int,
            AttrValue::Date(_) => AttrKind::Date,
            AttrValue::Keywords(_) => AttrKind::Keywords,
            AttrValue::Text(_) => AttrKind::Text,
        }
    }
}

pub type AttributeTuple = Vec<AttrValue>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrKind {
    Int,
    Date,
    Keywords,
    Text,
}

/// Dictionary-coded keyword sets. Universes of at most 64 keywords also keep
/// one bitmask word per row.
#[derive(Debug, Clone, Default)]
pub struct KeywordColumn {
    dict: Vec<String>,
    codes: FxHashMap<String, u32>,
    sets: Vec<Vec<u32>>,
    masks: Option<Vec<u64>>,
}

impl KeywordColumn {
    fn from_rows<I, S>(rows: I) -> Self
    where
        I: IntoIterator<Item = Vec<S>>,
        S: AsRef<str>,
    {
        let mut col = KeywordColumn::default();
        for row in rows {
            let mut set: Vec<u32> = row.iter().map(|k| col.intern(k.as_ref())).collect();
            set.sort_unstable();
            set.dedup();
            col.sets.push(set);
        }
        col.rebuild_masks();
        col
    }

    fn intern(&mut self, kw: &str) -> u32 {
        if let Some(&c) = self.codes.get(kw) {
            return c;
        }
        let c = self.dict.len() as u32;
        self.dict.push(kw.to_string());
        self.codes.insert(kw.to_string(), c);
        c
    }

    fn rebuild_masks(&mut self) {
        self.masks = (self.dict.len() <= 64).then(|| {
            self.sets
                .iter()
                .map(|s| s.iter().fold(0u64, |m, &c| m | (1u64 << c)))
                .collect()
        });
    }

    pub fn code(&self, kw: &str) -> Option<u32> {
        self.codes.get(kw).copied()
    }

    pub fn universe(&self) -> &[String] {
        &self.dict
    }

    pub fn set(&self, row: usize) -> &[u32] {
        &self.sets[row]
    }

    pub fn masks(&self) -> Option<&[u64]> {
        self.masks.as_deref()
    }
}

#[derive(Debug, Clone)]
pub enum Column {
    Int(Vec<i64>),
    Date(Vec<i64>),
    Keywords(KeywordColumn),
    Text(Vec<String>),
}

impl Column {
    pub fn kind(&self) -> AttrKind {
        match self {
            Column::Int(_) => AttrKind::Int,
            Column::Date(_) => AttrKind::Date,
            Column::Keywords(_) => AttrKind::Keywords,
            Column::Text(_) => AttrKind::Text,
        }
    }

    fn len(&self) -> usize {
        match self {
            Column::Int(v) | Column::Date(v) => v.len(),
            Column::Keywords(k) => k.sets.len(),
            Column::Text(v) => v.len(),
        }
    }

    fn value(&self, row: usize) -> AttrValue {
        match self {
            Column::Int(v) => AttrValue::Int(v[row]),
            Column::Date(v) => AttrValue::Date(v[row]),
            Column::Keywords(k) => {
                AttrValue::Keywords(k.sets[row].iter().map(|&c| k.dict[c as usize].clone()).collect())
            }
            Column::Text(v) => AttrValue::Text(v[row].clone()),
        }
    }

    fn subset(&self, ids: &[u32]) -> Column {
        match self {
            Column::Int(v) => Column::Int(ids.iter().map(|&i| v[i as usize]).collect()),
            Column::Date(v) => Column::Date(ids.iter().map(|&i| v[i as usize]).collect()),
            Column::Keywords(k) => {
                let mut out = KeywordColumn {
                    dict: k.dict.clone(),
                    codes: k.codes.clone(),
                    sets: ids.iter().map(|&i| k.sets[i as usize].clone()).collect(),
                    masks: None,
                };
                out.rebuild_masks();
                Column::Keywords(out)
            }
            Column::Text(v) => Column::Text(ids.iter().map(|&i| v[i as usize].clone()).collect()),
        }
    }
}

/// `n` entities, each a `dim`-dimensional vector plus an attribute tuple.
#[derive(Debug, Clone)]
pub struct Dataset {
    dim: usize,
    metric: Metric,
    vectors: Vec<f32>,
    columns: Vec<Column>,
}

impl Dataset {
    /// Vectors only, no attributes.
    pub fn from_vectors(dim: usize, vectors: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        if vectors.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: vectors.len() % dim,
            });
        }
        Ok(Dataset {
            dim,
            metric: Metric::L2,
            vectors,
            columns: Vec::new(),
        })
    }

    /// Builds a dataset from row tuples, checking that every tuple has the
    /// same arity and per-position kind.
    pub fn from_tuples(dim: usize, vectors: Vec<f32>, tuples: Vec<AttributeTuple>) -> Result<Self> {
        let mut ds = Self::from_vectors(dim, vectors)?;
        if tuples.len() != ds.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} attribute rows for {} vectors",
                tuples.len(),
                ds.len()
            )));
        }
        let Some(first) = tuples.first() else {
            return Ok(ds);
        };
        let schema: Vec<AttrKind> = first.iter().map(AttrValue::kind).collect();
        for (row, t) in tuples.iter().enumerate() {
            if t.len() != schema.len() || t.iter().zip(&schema).any(|(v, k)| v.kind() != *k) {
                return Err(Error::SchemaMismatch(format!(
                    "row {row} does not match the schema of row 0 ({schema:?})"
                )));
            }
        }
        for (pos, kind) in schema.iter().enumerate() {
            let col = match kind {
                AttrKind::Int => Column::Int(tuples.iter().map(|t| int_of(&t[pos])).collect()),
                AttrKind::Date => Column::Date(tuples.iter().map(|t| int_of(&t[pos])).collect()),
                AttrKind::Text => Column::Text(
                    tuples
                        .iter()
                        .map(|t| match &t[pos] {
                            AttrValue::Text(s) => s.clone(),
                            _ => unreachable!(),
                        })
                        .collect(),
                ),
                AttrKind::Keywords => Column::Keywords(KeywordColumn::from_rows(tuples.iter().map(|t| {
                    match &t[pos] {
                        AttrValue::Keywords(k) => k.clone(),
                        _ => unreachable!(),
                    }
                }))),
            };
            ds.columns.push(col);
        }
        Ok(ds)
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    pub fn push_int_column(&mut self, values: Vec<i64>) -> Result<()> {
        self.push_column(Column::Int(values))
    }

    pub fn push_date_column(&mut self, values: Vec<i64>) -> Result<()> {
        self.push_column(Column::Date(values))
    }

    pub fn push_text_column(&mut self, values: Vec<String>) -> Result<()> {
        self.push_column(Column::Text(values))
    }

    pub fn push_keyword_column<S: AsRef<str>>(&mut self, rows: Vec<Vec<S>>) -> Result<()> {
        self.push_column(Column::Keywords(KeywordColumn::from_rows(rows)))
    }

    fn push_column(&mut self, col: Column) -> Result<()> {
        if col.len() != self.len() {
            return Err(Error::SchemaMismatch(format!(
                "column has {} rows, dataset has {}",
                col.len(),
                self.len()
            )));
        }
        self.columns.push(col);
        Ok(())
    }

    /// Drops all attribute columns, keeping vectors.
    pub fn without_attributes(&self) -> Dataset {
        Dataset {
            dim: self.dim,
            metric: self.metric,
            vectors: self.vectors.clone(),
            columns: Vec::new(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn metric(&self) -> Metric {
        self.metric
    }

    #[inline]
    pub fn vector(&self, id: u32) -> &[f32] {
        let start = id as usize * self.dim;
        &self.vectors[start..start + self.dim]
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    #[inline]
    pub fn score(&self, a: u32, b: u32) -> f32 {
        self.metric.score(self.vector(a), self.vector(b))
    }

    #[inline]
    pub fn score_to(&self, query: &[f32], id: u32) -> f32 {
        self.metric.score(query, self.vector(id))
    }

    pub fn schema(&self) -> Vec<AttrKind> {
        self.columns.iter().map(Column::kind).collect()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, pos: usize) -> Option<&Column> {
        self.columns.get(pos)
    }

    pub fn tuple(&self, row: usize) -> AttributeTuple {
        self.columns.iter().map(|c| c.value(row)).collect()
    }

    /// Rows `ids` in the given order, renumbered densely from 0.
    pub fn subset(&self, ids: &[u32]) -> Dataset {
        let mut vectors = Vec::with_capacity(ids.len() * self.dim);
        for &i in ids {
            vectors.extend_from_slice(self.vector(i));
        }
        Dataset {
            dim: self.dim,
            metric: self.metric,
            vectors,
            columns: self.columns.iter().map(|c| c.subset(ids)).collect(),
        }
    }

    /// True if both datasets hold bit-identical vectors.
    pub fn same_vectors(&self, other: &Dataset) -> bool {
        self.dim == other.dim
            && self.vectors.len() == other.vectors.len()
            && self
                .vectors
                .iter()
                .zip(&other.vectors)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn save(&self, vectors_path: &Path, attrs_path: &Path) -> Result<()> {
        write_fvecs(vectors_path, self.dim, &self.vectors)?;
        write_attributes(attrs_path, (0..self.len()).map(|i| self.tuple(i)))
    }

    /// Loads `vectors_path` (fvecs) and, if present, the JSON-lines attribute
    /// sidecar.
    pub fn load(vectors_path: &Path, attrs_path: Option<&Path>) -> Result<Self> {
        let (dim, vectors) = read_fvecs(vectors_path)?;
        match attrs_path {
            None => Self::from_vectors(dim, vectors),
            Some(p) => Self::from_tuples(dim, vectors, read_attributes(p)?),
        }
    }
}

fn int_of(v: &AttrValue) -> i64 {
    match v {
        AttrValue::Int(x) | AttrValue::Date(x) => *x,
        _ => unreachable!(),
    }
}

/// Reads an fvecs file: repeated `(d: i32 LE, d × f32 LE)` records.
pub fn read_fvecs(path: &Path) -> Result<(usize, Vec<f32>)> {
    let bytes = read_all(path)?;
    let (dim, words) = read_vecs_words(&bytes, path)?;
    Ok((dim, words.into_iter().map(f32::from_bits).collect()))
}

pub fn read_ivecs(path: &Path) -> Result<(usize, Vec<i32>)> {
    let bytes = read_all(path)?;
    let (dim, words) = read_vecs_words(&bytes, path)?;
    Ok((dim, words.into_iter().map(|w| w as i32).collect()))
}

pub fn write_fvecs(path: &Path, dim: usize, data: &[f32]) -> Result<()> {
    write_vecs_words(path, dim, data.iter().map(|x| x.to_bits()))
}

pub fn write_ivecs(path: &Path, dim: usize, data: &[i32]) -> Result<()> {
    write_vecs_words(path, dim, data.iter().map(|&x| x as u32))
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    Ok(bytes)
}

fn read_vecs_words(bytes: &[u8], path: &Path) -> Result<(usize, Vec<u32>)> {
    let mut out = Vec::new();
    let mut dim = None;
    let mut pos = 0;
    let word = |at: usize| -> Option<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    };
    while pos < bytes.len() {
        let d = word(pos).ok_or(Error::Truncated)? as i32;
        if d <= 0 {
            return Err(Error::Parse(format!("{}: non-positive dimension {d}", path.display())));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::DimensionMismatch { expected, found: d });
            }
            _ => {}
        }
        pos += 4;
        if bytes.len() < pos + 4 * d {
            return Err(Error::Truncated);
        }
        out.extend((0..d).map(|i| word(pos + 4 * i).expect("bounds checked")));
        pos += 4 * d;
    }
    let dim = dim.ok_or_else(|| Error::Parse(format!("{}: no vectors", path.display())))?;
    Ok((dim, out))
}

fn write_vecs_words(path: &Path, dim: usize, words: impl Iterator<Item = u32>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = (dim as u32).to_le_bytes();
    let mut res = Ok(());
    for (i, word) in words.enumerate() {
        if i % dim == 0 {
            res = res.and(w.write_all(&header));
        }
        res = res.and(w.write_all(&word.to_le_bytes()));
    }
    res.and(w.flush()).map_err(|e| Error::io(path, e))
}

pub fn write_attributes(path: &Path, rows: impl Iterator<Item = AttributeTuple>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(&row).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_attributes(path: &Path) -> Result<Vec<AttributeTuple>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: AttributeTuple = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}
