//! Binary tensor and model files, and the per-sweep trace CSV.
//!
//! Tensor file: `"CPDT"`, version `1`, order `N` (one byte each for the
//! last two), `N` little-endian `u64` extents, then the row-major `f64`
//! payload. Model file: `"CPDF"`, version, order, `u32` rank, extents, `λ`,
//! then each factor row-major.

use std::path::Path;

use crate::error::{Error, Result};
use crate::kruskal::KruskalModel;
use crate::solvers::TraceRow;
use crate::tensor::{DenseTensor, Matrix, Shape};

pub const TENSOR_MAGIC: &[u8; 4] = b"CPDT";
pub const MODEL_MAGIC: &[u8; 4] = b"CPDF";
pub const FORMAT_VERSION: u8 = 1;

pub const TRACE_HEADER: &str = "iter,order,fitness,raw_radicand,seconds,root_ttms,flops,beta,regularized";

pub fn encode_tensor(t: &DenseTensor) -> Result<Vec<u8>> {
    let order = order_byte(t.order())?;
    let mut out = Vec::with_capacity(6 + 8 * (t.order() + t.numel()));
    out.extend_from_slice(TENSOR_MAGIC);
    out.push(FORMAT_VERSION);
    out.push(order);
    for &d in t.dims() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<DenseTensor> {
    let mut r = Reader::new(bytes);
    let order = r.header(TENSOR_MAGIC)?;
    let shape = r.shape(order)?;
    let data = r.floats(shape.numel(), "tensor payload")?;
    r.finish()?;
    let t = DenseTensor::new(shape, data)?;
    t.check_finite()
        .map_err(|_| Error::Format("tensor payload contains NaN or infinity".into()))?;
    Ok(t)
}

pub fn encode_model(m: &KruskalModel) -> Result<Vec<u8>> {
    let order = order_byte(m.order())?;
    let rank = u32::try_from(m.rank()).map_err(|_| Error::Format("rank does not fit in u32".into()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.push(FORMAT_VERSION);
    out.push(order);
    out.extend_from_slice(&rank.to_le_bytes());
    for d in m.dims() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in m.lambda() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for f in m.factors() {
        for v in f.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<KruskalModel> {
    let mut r = Reader::new(bytes);
    let order = r.header(MODEL_MAGIC)?;
    let rank = u32::from_le_bytes(r.take(4, "rank")?.try_into().expect("4 bytes")) as usize;
    if rank == 0 {
        return Err(Error::Format("model rank is zero".into()));
    }
    let shape = r.shape(order)?;
    let lambda = r.floats(rank, "weights")?;
    if lambda.iter().any(|&l| !l.is_finite() || l < 0.0) {
        return Err(Error::Format("weights must be finite and non-negative".into()));
    }
    let mut factors = Vec::with_capacity(order);
    for (k, &d) in shape.dims().iter().enumerate() {
        let n = d
            .checked_mul(rank)
            .ok_or_else(|| Error::Format("factor size overflows".into()))?;
        let data = r.floats(n, "factor payload")?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("factor {} contains NaN or infinity", k + 1)));
        }
        factors.push(Matrix::from_vec(d, rank, data)?);
    }
    r.finish()?;
    KruskalModel::new(lambda, factors)
}

/// Header fields of either file kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FileInfo {
    Tensor { dims: Vec<usize> },
    Model { dims: Vec<usize>, rank: usize },
}

impl std::fmt::Display for FileInfo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let join = |dims: &[usize]| dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
        match self {
            FileInfo::Tensor { dims } => write!(
                f,
                "tensor v{FORMAT_VERSION}: order {}, dims {}, {} elements",
                dims.len(),
                join(dims),
                dims.iter().product::<usize>()
            ),
            FileInfo::Model { dims, rank } => write!(
                f,
                "model v{FORMAT_VERSION}: order {}, dims {}, rank {rank}",
                dims.len(),
                join(dims)
            ),
        }
    }
}

/// Validates the whole file and reports its header.
pub fn inspect(bytes: &[u8]) -> Result<FileInfo> {
    match bytes.get(..4) {
        Some(m) if m == TENSOR_MAGIC => Ok(FileInfo::Tensor {
            dims: decode_tensor(bytes)?.dims().to_vec(),
        }),
        Some(m) if m == MODEL_MAGIC => {
            let model = decode_model(bytes)?;
            Ok(FileInfo::Model {
                dims: model.dims(),
                rank: model.rank(),
            })
        }
        _ => Err(Error::Format("unrecognized file magic".into())),
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    decode_tensor(&std::fs::read(path)?)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &DenseTensor) -> Result<()> {
    Ok(std::fs::write(path, encode_tensor(t)?)?)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<KruskalModel> {
    decode_model(&std::fs::read(path)?)
}

pub fn write_model(path: impl AsRef<Path>, m: &KruskalModel) -> Result<()> {
    Ok(std::fs::write(path, encode_model(m)?)?)
}

fn order_byte(order: usize) -> Result<u8> {
    u8::try_from(order).map_err(|_| Error::Format(format!("order {order} does not fit in one byte")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated {what}: need {n} bytes at offset {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<usize> {
        let m = self.take(4, "magic")?;
        if m != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(magic)
            )));
        }
        let version = self.take(1, "version")?[0];
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let order = self.take(1, "order")?[0] as usize;
        if order == 0 {
            return Err(Error::Format("order is zero".into()));
        }
        Ok(order)
    }

    fn shape(&mut self, order: usize) -> Result<Shape> {
        let mut dims = Vec::with_capacity(order);
        for _ in 0..order {
            let d = u64::from_le_bytes(self.take(8, "extent")?.try_into().expect("8 bytes"));
            dims.push(usize::try_from(d).map_err(|_| Error::Format(format!("extent {d} too large")))?);
        }
        Shape::new(dims).map_err(|e| Error::Format(e.to_string()))
    }

    fn floats(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::Format(format!("{what} too large")))?;
        let raw = self.take(len, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Update order as one-based digits, `-`-separated when some mode exceeds 9.
pub fn format_order(order: &[usize]) -> String {
    let sep = if order.iter().any(|&m| m >= 9) { "-" } else { "" };
    order.iter().map(|m| (m + 1).to_string()).collect::<Vec<_>>().join(sep)
}

pub fn parse_order(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Format(format!("bad update order `{s}`"));
    let parts: Vec<&str> = if s.contains('-') {
        s.split('-').collect()
    } else {
        s.split("").filter(|p| !p.is_empty()).collect()
    };
    parts
        .iter()
        .map(|p| match p.parse::<usize>() {
            Ok(m) if m >= 1 => Ok(m - 1),
            _ => Err(bad()),
        })
        .collect()
}

/// CSV text of a trace. With `zero_time` the seconds column is written as
/// zero so runs can be compared byte for byte.
pub fn format_trace(rows: &[TraceRow], zero_time: bool) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        let secs = if zero_time { 0.0 } else { r.wall_seconds };
        out.push_str(&format!(
            "{},{},{},{},{:.6},{},{},{},{}\n",
            r.iteration,
            format_order(&r.update_order),
            r.fitness,
            r.raw_radicand,
            secs,
            r.root_ttm_count,
            r.flops,
            r.beta_used,
            u8::from(r.regularized)
        ));
    }
    out
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Err(Error::Format("missing trace header".into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let bad = |what: &str| Error::Format(format!("trace line {}: bad {what}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(bad("field count"));
            }
            Ok(TraceRow {
                iteration: f[0].parse().map_err(|_| bad("iter"))?,
                update_order: parse_order(f[1])?,
                fitness: f[2].parse().map_err(|_| bad("fitness"))?,
                raw_radicand: f[3].parse().map_err(|_| bad("raw_radicand"))?,
                wall_seconds: f[4].parse().map_err(|_| bad("seconds"))?,
                root_ttm_count: f[5].parse().map_err(|_| bad("root_ttms"))?,
                flops: f[6].parse().map_err(|_| bad("flops"))?,
                beta_used: f[7].parse().map_err(|_| bad("beta"))?,
                regularized: match f[8] {
                    "0" => false,
                    "1" => true,
                    _ => return Err(bad("regularized")),
                },
            })
        })
        .collect()
}
