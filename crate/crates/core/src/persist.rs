//! Binary index and ground-truth files, and JSON-lines workload files.
//!
//! Index layout (all integers little-endian):
//!
//! ```text
//! "ACRN"  version:u32  variant:u32  M:u32  efc:u32  gamma:u32  m_beta:u32
//! seed:u64  n:u32  d:u32  max_level:u32  entry_point:u32
//! metric:u32  prune:u32  label_attr:u32  compressed_levels:u32
//! for each level 0..=max_level:
//!     count:u32  node_ids:[u32; count]  offsets:[u64; count + 1]  neighbors:[u32]
//! crc32:u32   (over every preceding byte)
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distance::Metric;
use crate::error::{Error, Result};
use crate::graph::{BuildParams, GraphIndex, PruneStrategy, Variant};
use crate::predicate::Predicate;
use crate::query::HybridQuery;
use crate::workload::GroundTruth;

pub const MAGIC: &[u8; 4] = b"ACRN";
pub const VERSION: u32 = 1;

const HEADER_LEN: usize = 4 + 4 * 6 + 8 + 4 * 4 + 4 * 4;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn usize32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::InvalidParams(format!("{v} does not fit the 32-bit file field")))?;
        self.u32(v);
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        let out = self.bytes.get(self.pos..end).ok_or(Error::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        let raw = self.take(n.checked_mul(4).ok_or(Error::Truncated)?)?;
        Ok(raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }

    fn u64s(&mut self, n: usize) -> Result<Vec<u64>> {
        let raw = self.take(n.checked_mul(8).ok_or(Error::Truncated)?)?;
        Ok(raw.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn save_index(index: &GraphIndex) -> Result<Vec<u8>> {
    let p = index.params();
    let mut w = Writer {
        buf: Vec::with_capacity(HEADER_LEN + 4 * (index.total_edges() + 3 * index.len())),
    };
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u32(p.variant.tag());
    w.usize32(p.m)?;
    w.usize32(p.efc)?;
    w.usize32(p.gamma)?;
    w.usize32(p.m_beta)?;
    w.u64(p.seed);
    w.usize32(index.len())?;
    w.usize32(index.dim())?;
    w.usize32(index.max_level())?;
    w.u32(index.entry_point());
    w.u32(index.metric().tag());
    w.u32(p.prune.tag());
    w.usize32(p.label_attr())?;
    w.usize32(p.compressed_levels)?;
    for l in 0..index.num_levels() {
        let nodes: Vec<u32> = index.nodes_on_level(l).collect();
        w.usize32(nodes.len())?;
        for &v in &nodes {
            w.u32(v);
        }
        let mut offset = 0u64;
        w.u64(0);
        for &v in &nodes {
            offset += index.list(v, l).len() as u64;
            w.u64(offset);
        }
        for &v in &nodes {
            for &u in index.list(v, l) {
                w.u32(u);
            }
        }
    }
    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    Ok(w.buf)
}

fn violation(what: &str) -> Error {
    Error::InvariantViolation(what.to_string())
}

/// Parses an index, checking magic, version, checksum and then every
/// structural invariant.
pub fn load_index(bytes: &[u8]) -> Result<GraphIndex> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(if bytes.len() < 4 { Error::Truncated } else { Error::BadMagic });
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::BadVersion(version));
    }
    if bytes.len() < HEADER_LEN + 4 {
        return Err(Error::Truncated);
    }
    let (payload, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::BadChecksum { stored, computed });
    }
    let mut r = Reader { bytes: payload, pos: 8 };
    let variant = Variant::from_tag(r.u32()?).ok_or_else(|| violation("unknown variant"))?;
    let m = r.u32()? as usize;
    let efc = r.u32()? as usize;
    let gamma = r.u32()? as usize;
    let m_beta = r.u32()? as usize;
    let seed = r.u64()?;
    let n = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let max_level = r.u32()? as usize;
    let entry_point = r.u32()?;
    let metric = Metric::from_tag(r.u32()?).ok_or_else(|| violation("unknown metric"))?;
    let prune_tag = r.u32()?;
    let label_attr = r.u32()? as usize;
    let prune = PruneStrategy::from_tag(prune_tag, label_attr).ok_or_else(|| violation("unknown prune strategy"))?;
    let compressed_levels = r.u32()? as usize;
    let params = BuildParams {
        variant,
        m,
        efc,
        gamma,
        m_beta,
        seed,
        prune,
        compressed_levels,
    };
    if n == 0 {
        return Err(violation("empty index"));
    }
    if max_level > u8::MAX as usize {
        return Err(violation("level count"));
    }
    // every level lists at least one node id, so a level count beyond the
    // payload size is corrupt; this also bounds the allocations below
    if max_level + 1 > payload.len() / 4 || n > payload.len() / 4 {
        return Err(violation("level table size"));
    }
    let mut node_levels = vec![0u8; n];
    let mut lists: Vec<Vec<Vec<u32>>> = Vec::with_capacity(max_level + 1);
    for l in 0..=max_level {
        let count = r.u32()? as usize;
        if count == 0 || count > n {
            return Err(violation("level table size"));
        }
        if l == 0 && count != n {
            return Err(violation("level 0 must hold every node"));
        }
        let nodes = r.u32s(count)?;
        let offsets = r.u64s(count + 1)?;
        if offsets[0] != 0 || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(violation("offsets not monotone"));
        }
        let total = usize::try_from(offsets[count]).map_err(|_| violation("offsets not monotone"))?;
        let neighbors = r.u32s(total)?;
        let mut level_lists = vec![Vec::new(); n];
        let mut prev: Option<u32> = None;
        for (i, &v) in nodes.iter().enumerate() {
            if v as usize >= n {
                return Err(violation("node id out of range"));
            }
            if prev.is_some_and(|p| p >= v) {
                return Err(violation("node ids not ascending"));
            }
            prev = Some(v);
            if l > 0 && node_levels[v as usize] as usize != l - 1 {
                return Err(violation("levels not nested"));
            }
            node_levels[v as usize] = l as u8;
            level_lists[v as usize] = neighbors[offsets[i] as usize..offsets[i + 1] as usize].to_vec();
        }
        lists.push(level_lists);
    }
    if r.pos != payload.len() {
        return Err(violation("trailing bytes"));
    }
    GraphIndex::from_parts(params, dim, metric, entry_point, node_levels, lists)
}

pub fn write_index(path: &Path, index: &GraphIndex) -> Result<()> {
    let bytes = save_index(index)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_index(path: &Path) -> Result<GraphIndex> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    load_index(&bytes)
}

/// Ground truth as `n_queries:u32 K:u32` followed by `K` `(id:u32, dist:f32)`
/// pairs per query; short rows are padded with `(u32::MAX, inf)`.
pub fn save_ground_truth(gt: &GroundTruth) -> Result<Vec<u8>> {
    let mut w = Writer {
        buf: Vec::with_capacity(8 + gt.len() * gt.k * 8),
    };
    w.usize32(gt.len())?;
    w.usize32(gt.k)?;
    for (ids, dists) in gt.ids.iter().zip(&gt.distances) {
        for i in 0..gt.k {
            match ids.get(i) {
                Some(&id) => {
                    w.u32(id);
                    w.buf.extend_from_slice(&dists[i].to_le_bytes());
                }
                None => {
                    w.u32(u32::MAX);
                    w.buf.extend_from_slice(&f32::INFINITY.to_le_bytes());
                }
            }
        }
    }
    Ok(w.buf)
}

pub fn load_ground_truth(bytes: &[u8]) -> Result<GroundTruth> {
    let mut r = Reader { bytes, pos: 0 };
    let n = r.u32()? as usize;
    let k = r.u32()? as usize;
    if n.checked_mul(k).and_then(|x| x.checked_mul(8)) != Some(bytes.len() - 8) {
        return Err(Error::Truncated);
    }
    let mut ids = Vec::with_capacity(n);
    let mut distances = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row_ids = Vec::with_capacity(k);
        let mut row_d = Vec::with_capacity(k);
        for _ in 0..k {
            let id = r.u32()?;
            let d = f32::from_bits(r.u32()?);
            if id != u32::MAX {
                row_ids.push(id);
                row_d.push(d);
            }
        }
        ids.push(row_ids);
        distances.push(row_d);
    }
    Ok(GroundTruth { k, ids, distances })
}

pub fn write_ground_truth(path: &Path, gt: &GroundTruth) -> Result<()> {
    fs::write(path, save_ground_truth(gt)?).map_err(|e| Error::io(path, e))
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    load_ground_truth(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// One line of a workload file. Exactly one of `vector` and `vector_index`
/// is set; the index refers to a separate query-vector file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector_index: Option<usize>,
    pub predicate: Predicate,
    #[serde(rename = "K")]
    pub k: usize,
}

/// Writes queries with inline vectors.
pub fn write_workload(path: &Path, queries: &[HybridQuery]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for q in queries {
        let rec = WorkloadRecord {
            vector: Some(q.vector.clone()),
            vector_index: None,
            predicate: q.predicate.clone(),
            k: q.k,
        };
        serde_json::to_writer(&mut out, &rec).map_err(|e| Error::Parse(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a workload, resolving `vector_index` entries against `pool`, a
/// flat row-major array of `dim`-dimensional query vectors.
pub fn read_workload(path: &Path, pool: Option<(&[f32], usize)>) -> Result<Vec<HybridQuery>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse(format!("{}:{}: {msg}", path.display(), lineno + 1));
        let rec: WorkloadRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        rec.predicate.validate()?;
        let vector = match (rec.vector, rec.vector_index) {
            (Some(v), None) => v,
            (None, Some(i)) => {
                let (data, dim) = pool.ok_or_else(|| bad("vector_index given but no query vector file".into()))?;
                data.get(i * dim..(i + 1) * dim)
                    .ok_or_else(|| bad(format!("vector_index {i} out of range")))?
                    .to_vec()
            }
            _ => return Err(bad("exactly one of vector and vector_index must be set".into())),
        };
        out.push(HybridQuery::new(vector, rec.predicate, rec.k));
    }
    Ok(out)
}
