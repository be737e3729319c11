//! Immutable id → vector store with a text (TSV) and a binary (`EMB1`) codec.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! "EMB1" | dim: u32 | count: u64 | count × ( id_len: u16 | id: [u8; id_len] | dim × f32 )
//! ```
//!
//! Vectors are stored exactly as loaded; no normalization is applied.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"EMB1";
pub const MAX_DIM: usize = 16384;
pub const MAX_ID_BYTES: usize = u16::MAX as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Binary,
    Tsv,
}

impl EmbeddingFormat {
    /// Guess the format from a file extension: `.tsv`/`.txt` are text, everything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("txt") => EmbeddingFormat::Tsv,
            _ => EmbeddingFormat::Binary,
        }
    }
}

impl FromStr for EmbeddingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" | "bin" | "emb" => Ok(EmbeddingFormat::Binary),
            "tsv" => Ok(EmbeddingFormat::Tsv),
            other => Err(Error::param(format!(
                "unknown embedding format `{other}` (expected binary or tsv)"
            ))),
        }
    }
}

/// Dense embedding vectors keyed by opaque string ids, in insertion order.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Validation(format!("dimension {dim} outside 1..={MAX_DIM}")));
        }
        Ok(Self {
            dim,
            ids: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn from_entries<I, S>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut m = Self::new(dim)?;
        for (id, v) in entries {
            m.push(id, &v)?;
        }
        Ok(m)
    }

    /// Append one record, validating id and vector.
    pub fn push(&mut self, id: impl Into<String>, vector: &[f32]) -> Result<()> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::Validation("empty id".into()));
        }
        if id.len() > MAX_ID_BYTES {
            return Err(Error::Validation(format!(
                "id of {} bytes exceeds {MAX_ID_BYTES}",
                id.len()
            )));
        }
        if vector.len() != self.dim {
            return Err(Error::Validation(format!(
                "vector for `{id}` has {} components, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if let Some(pos) = vector.iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation(format!("component {pos} of `{id}` is not finite")));
        }
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.vector(i))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Records in file order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&str, &[f32])> + '_ {
        self.ids
            .iter()
            .enumerate()
            .map(move |(i, id)| (id.as_str(), self.vector(i)))
    }

    /// A copy with every component multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        Self::from_entries(
            self.dim,
            self.iter()
                .map(|(id, v)| (id.to_string(), v.iter().map(|x| x * factor).collect())),
        )
    }

    pub fn load(path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        match format {
            EmbeddingFormat::Binary => Self::decode_binary(&bytes),
            EmbeddingFormat::Tsv => Self::decode_tsv(&bytes),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<()> {
        let path = path.as_ref();
        let bytes = match format {
            EmbeddingFormat::Binary => self.encode_binary(),
            EmbeddingFormat::Tsv => self.encode_tsv()?.into_bytes(),
        };
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        f.flush().map_err(|e| Error::io(path, e))
    }

    pub fn encode_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.ids.len() * (2 + 16 + 4 * self.dim));
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        for (id, v) in self.iter() {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn decode_binary(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Parse {
                offset: 0,
                message: format!("bad magic {magic:02x?}, expected \"EMB1\""),
            });
        }
        let dim_offset = r.pos;
        let dim = u32::from_le_bytes(r.take(4, "dim")?.try_into().unwrap()) as usize;
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Parse {
                offset: dim_offset as u64,
                message: format!("dimension {dim} outside 1..={MAX_DIM}"),
            });
        }
        let count = u64::from_le_bytes(r.take(8, "record count")?.try_into().unwrap());
        // Cap preallocation by what the payload could possibly hold.
        let room = ((bytes.len() - r.pos) as u64 / (3 + 4 * dim as u64)).min(count) as usize;
        let mut m = Self::new(dim)?;
        m.ids.reserve(room);
        m.data.reserve(room * dim);
        let mut v = vec![0f32; dim];
        for _ in 0..count {
            let rec_offset = r.pos as u64;
            let id_len = u16::from_le_bytes(r.take(2, "id length")?.try_into().unwrap()) as usize;
            let id_bytes = r.take(id_len, "id")?;
            let id = std::str::from_utf8(id_bytes).map_err(|e| Error::Parse {
                offset: rec_offset + 2,
                message: format!("id is not UTF-8: {e}"),
            })?;
            let payload = r.take(4 * dim, "vector")?;
            for (dst, chunk) in v.iter_mut().zip(payload.chunks_exact(4)) {
                *dst = f32::from_le_bytes(chunk.try_into().unwrap());
            }
            m.push(id, &v)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Parse {
                offset: r.pos as u64,
                message: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        Ok(m)
    }

    /// `<id>\t<c1>,<c2>,...` per line. An empty matrix is written as a single `# dim=<d>` line
    /// so the dimensionality survives the round trip.
    pub fn encode_tsv(&self) -> Result<String> {
        let mut out = String::new();
        if self.is_empty() {
            writeln!(out, "# dim={}", self.dim).unwrap();
        }
        for (id, v) in self.iter() {
            if id.contains(['\t', '\n', '\r']) || id.starts_with('#') {
                return Err(Error::Validation(format!(
                    "id `{}` cannot be represented in TSV",
                    id.escape_debug()
                )));
            }
            out.push_str(id);
            out.push('\t');
            for (j, x) in v.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{x}").unwrap();
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn decode_tsv(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
            offset: e.valid_up_to() as u64,
            message: "file is not UTF-8".into(),
        })?;
        let mut declared_dim = None;
        let mut m: Option<Self> = None;
        let mut offset = 0usize;
        for raw in text.split_inclusive('\n') {
            let line_offset = offset;
            offset += raw.len();
            let line = raw.trim_end_matches(['\n', '\r']);
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(d) = comment.trim().strip_prefix("dim=") {
                    declared_dim = Some(d.trim().parse::<usize>().map_err(|_| Error::Parse {
                        offset: line_offset as u64,
                        message: format!("bad dim header `{line}`"),
                    })?);
                }
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                offset: line_offset as u64,
                message,
            };
            let (id, comps) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("missing tab separator".into()))?;
            let vector = comps
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse::<f32>()
                        .map_err(|_| parse_err(format!("bad component `{c}` for `{id}`")))
                })
                .collect::<Result<Vec<f32>>>()?;
            let matrix = match m.as_mut() {
                Some(matrix) => matrix,
                None => m.insert(Self::new(declared_dim.unwrap_or(vector.len()))?),
            };
            matrix.push(id, &vector)?;
        }
        match (m, declared_dim) {
            (Some(m), _) => Ok(m),
            (None, Some(d)) => Self::new(d),
            (None, None) => Err(Error::Parse {
                offset: 0,
                message: "empty TSV without a `# dim=` header".into(),
            }),
        }
    }
}

/// Bitwise equality on vector payloads.
impl PartialEq for EmbeddingMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.ids == other.ids
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse {
                offset: self.pos as u64,
                message: format!("truncated {what}: need {n} bytes"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}
