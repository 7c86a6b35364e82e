//! Write-once, read-many binary store of token embedding matrices.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "EMBS" | version u8 = 1 | precision u8 (0 = f32, 1 = f16)
//! | T u32 | H u32 | count u64 | tag_len u16 | tag (UTF-8)
//! | count × (id_len u16 | id (UTF-8) | offset u64)
//! | count × T·H values, row-major
//! ```
//!
//! `offset` is the absolute byte position of the document's matrix. Matrices
//! are laid out back to back in index order, so offsets are redundant with the
//! index position; the reader checks that they agree.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use half::f16;
use serde::Serialize;

use super::{f32_slice_to_f16, MatrixData, Precision, TokenEmbeddingMatrix};
use crate::error::{Error, Result};

pub const STORE_MAGIC: [u8; 4] = *b"EMBS";
pub const STORE_VERSION: u8 = 1;

const FIXED_HEADER_LEN: u64 = 4 + 1 + 1 + 4 + 4 + 8 + 2;
const MIN_INDEX_ENTRY_LEN: u64 = 2 + 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StoreHeader {
    pub precision: Precision,
    pub positions: usize,
    pub hidden: usize,
    pub count: u64,
    pub model_tag: String,
}

impl StoreHeader {
    fn matrix_bytes(&self) -> Option<u64> {
        (self.positions as u64)
            .checked_mul(self.hidden as u64)?
            .checked_mul(self.precision.bytes_per_value() as u64)
    }
}

fn index_len(ids: &[String]) -> u64 {
    ids.iter().map(|id| MIN_INDEX_ENTRY_LEN + id.len() as u64).sum()
}

/// Streams matrices into a new store. The id list is fixed up front so the
/// header and index can be written before any payload.
pub struct StoreWriter {
    path: PathBuf,
    out: BufWriter<File>,
    header: StoreHeader,
    ids: Vec<String>,
    written: usize,
    clamped: usize,
}

impl StoreWriter {
    pub fn create(
        path: impl AsRef<Path>,
        precision: Precision,
        positions: usize,
        hidden: usize,
        model_tag: &str,
        ids: Vec<String>,
    ) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if positions == 0 || hidden == 0 || positions > u32::MAX as usize || hidden > u32::MAX as usize
        {
            return Err(Error::ShapeError(format!(
                "store shape {positions}x{hidden} out of range"
            )));
        }
        if model_tag.len() > u16::MAX as usize {
            return Err(Error::InvalidConfig("model tag longer than 65535 bytes".into()));
        }
        if let Some(id) = ids.iter().find(|id| id.len() > u16::MAX as usize) {
            return Err(Error::InvalidConfig(format!(
                "document id of {} bytes exceeds 65535",
                id.len()
            )));
        }
        let header = StoreHeader {
            precision,
            positions,
            hidden,
            count: ids.len() as u64,
            model_tag: model_tag.to_string(),
        };
        let matrix_bytes = header
            .matrix_bytes()
            .ok_or_else(|| Error::ShapeError("matrix byte size overflows u64".into()))?;

        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        let mut head = Vec::with_capacity(FIXED_HEADER_LEN as usize + model_tag.len());
        head.extend_from_slice(&STORE_MAGIC);
        head.push(STORE_VERSION);
        head.push(precision.code());
        head.extend_from_slice(&(positions as u32).to_le_bytes());
        head.extend_from_slice(&(hidden as u32).to_le_bytes());
        head.extend_from_slice(&header.count.to_le_bytes());
        head.extend_from_slice(&(model_tag.len() as u16).to_le_bytes());
        head.extend_from_slice(model_tag.as_bytes());

        let payload_start = head.len() as u64 + index_len(&ids);
        for (i, id) in ids.iter().enumerate() {
            head.extend_from_slice(&(id.len() as u16).to_le_bytes());
            head.extend_from_slice(id.as_bytes());
            head.extend_from_slice(&(payload_start + i as u64 * matrix_bytes).to_le_bytes());
        }
        out.write_all(&head).map_err(|e| Error::io(&path, e))?;

        Ok(Self {
            path,
            out,
            header,
            ids,
            written: 0,
            clamped: 0,
        })
    }

    /// Appends the next matrix in id order, converting to the store precision.
    pub fn append(&mut self, matrix: &TokenEmbeddingMatrix) -> Result<()> {
        let expected = self
            .ids
            .get(self.written)
            .ok_or_else(|| Error::ShapeError("store already holds every declared id".into()))?;
        if matrix.doc_id() != expected {
            return Err(Error::ShapeError(format!(
                "expected matrix for `{expected}`, got `{}`",
                matrix.doc_id()
            )));
        }
        if matrix.shape() != (self.header.positions, self.header.hidden) {
            return Err(Error::ShapeError(format!(
                "matrix `{}` is {:?}, store expects {:?}",
                matrix.doc_id(),
                matrix.shape(),
                (self.header.positions, self.header.hidden)
            )));
        }
        let mut bytes = Vec::with_capacity(
            matrix.positions() * matrix.hidden() * self.header.precision.bytes_per_value(),
        );
        match (self.header.precision, matrix.data()) {
            (Precision::F32, data) => {
                let values = match data {
                    MatrixData::F32(v) => std::borrow::Cow::Borrowed(v.as_slice()),
                    MatrixData::F16(_) => matrix.values_f32(),
                };
                for v in values.iter() {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
            }
            (Precision::F16, MatrixData::F16(v)) => {
                for h in v {
                    bytes.extend_from_slice(&h.to_le_bytes());
                }
            }
            (Precision::F16, MatrixData::F32(v)) => {
                let (half, clamped) = f32_slice_to_f16(v);
                self.clamped += clamped;
                for h in half {
                    bytes.extend_from_slice(&h.to_le_bytes());
                }
            }
        }
        self.out
            .write_all(&bytes)
            .map_err(|e| Error::io(&self.path, e))?;
        self.written += 1;
        Ok(())
    }

    /// Flushes the file. Fails unless every declared id was written. Returns
    /// the number of values clamped while narrowing to f16.
    pub fn finish(mut self) -> Result<usize> {
        if self.written != self.ids.len() {
            return Err(Error::ShapeError(format!(
                "store declared {} documents but {} were written",
                self.ids.len(),
                self.written
            )));
        }
        self.out.flush().map_err(|e| Error::io(&self.path, e))?;
        if self.clamped > 0 {
            log::warn!(
                "{}: {} values clamped to the f16 range",
                self.path.display(),
                self.clamped
            );
        }
        Ok(self.clamped)
    }

    /// Writes `matrices` (all of one shape) as a complete store.
    pub fn write_all(
        path: impl AsRef<Path>,
        precision: Precision,
        model_tag: &str,
        matrices: &[TokenEmbeddingMatrix],
    ) -> Result<usize> {
        let first = matrices
            .first()
            .ok_or(Error::EmptyInput("no matrices to store"))?;
        let ids = matrices.iter().map(|m| m.doc_id().to_string()).collect();
        let mut writer = Self::create(
            path,
            precision,
            first.positions(),
            first.hidden(),
            model_tag,
            ids,
        )?;
        for m in matrices {
            writer.append(m)?;
        }
        writer.finish()
    }
}

/// Read side of a store. Matrices are read from disk on demand; the file
/// handle sits behind a mutex so the store can be shared between threads.
#[derive(Debug)]
pub struct EmbeddingStore {
    path: PathBuf,
    header: StoreHeader,
    ids: Vec<String>,
    offsets: Vec<u64>,
    by_id: HashMap<String, usize>,
    file: Mutex<File>,
}

impl EmbeddingStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let file_len = file.metadata().map_err(|e| Error::io(&path, e))?.len();
        let corrupt = |msg: String| Error::CorruptStore(format!("{}: {msg}", path.display()));

        if file_len < FIXED_HEADER_LEN {
            return Err(corrupt(format!("{file_len} bytes is shorter than the header")));
        }
        let mut reader = BufReader::new(file);
        let mut fixed = [0u8; FIXED_HEADER_LEN as usize];
        reader.read_exact(&mut fixed).map_err(|e| Error::io(&path, e))?;
        if fixed[0..4] != STORE_MAGIC {
            return Err(corrupt("bad magic".into()));
        }
        if fixed[4] != STORE_VERSION {
            return Err(corrupt(format!("unsupported version {}", fixed[4])));
        }
        let precision = Precision::from_code(fixed[5])
            .ok_or_else(|| corrupt(format!("unknown precision code {}", fixed[5])))?;
        let positions = u32::from_le_bytes(fixed[6..10].try_into().unwrap()) as usize;
        let hidden = u32::from_le_bytes(fixed[10..14].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(fixed[14..22].try_into().unwrap());
        let tag_len = u16::from_le_bytes(fixed[22..24].try_into().unwrap()) as u64;
        if positions == 0 || hidden == 0 {
            return Err(corrupt(format!("degenerate shape {positions}x{hidden}")));
        }

        let mut consumed = FIXED_HEADER_LEN;
        let mut read_bytes = |reader: &mut BufReader<File>, n: u64| -> Result<Vec<u8>> {
            if consumed + n > file_len {
                return Err(corrupt("truncated header or index".into()));
            }
            consumed += n;
            let mut buf = vec![0u8; n as usize];
            reader.read_exact(&mut buf).map_err(|e| Error::io(&path, e))?;
            Ok(buf)
        };
        let model_tag = String::from_utf8(read_bytes(&mut reader, tag_len)?)
            .map_err(|_| corrupt("model tag is not UTF-8".into()))?;

        if count.saturating_mul(MIN_INDEX_ENTRY_LEN) > file_len {
            return Err(corrupt(format!("count {count} cannot fit in {file_len} bytes")));
        }
        let header = StoreHeader {
            precision,
            positions,
            hidden,
            count,
            model_tag,
        };
        let matrix_bytes = header
            .matrix_bytes()
            .ok_or_else(|| corrupt("matrix size overflows".into()))?;

        let mut ids = Vec::with_capacity(count as usize);
        let mut offsets = Vec::with_capacity(count as usize);
        let mut by_id = HashMap::with_capacity(count as usize);
        for i in 0..count as usize {
            let len = u16::from_le_bytes(read_bytes(&mut reader, 2)?.try_into().unwrap());
            let id = String::from_utf8(read_bytes(&mut reader, len as u64)?)
                .map_err(|_| corrupt(format!("id #{i} is not UTF-8")))?;
            let offset = u64::from_le_bytes(read_bytes(&mut reader, 8)?.try_into().unwrap());
            if by_id.insert(id.clone(), i).is_some() {
                return Err(corrupt(format!("duplicate id `{id}`")));
            }
            ids.push(id);
            offsets.push(offset);
        }

        let payload_start = consumed;
        let expected_len = count
            .checked_mul(matrix_bytes)
            .and_then(|p| p.checked_add(payload_start))
            .ok_or_else(|| corrupt("payload size overflows".into()))?;
        if file_len < expected_len {
            return Err(corrupt(format!(
                "truncated payload: {file_len} bytes, expected {expected_len}"
            )));
        }
        if file_len > expected_len {
            return Err(corrupt(format!(
                "{} trailing bytes after payload",
                file_len - expected_len
            )));
        }
        for (i, &offset) in offsets.iter().enumerate() {
            if offset != payload_start + i as u64 * matrix_bytes {
                return Err(corrupt(format!("offset of `{}` is out of sequence", ids[i])));
            }
        }

        let file = reader.into_inner();
        Ok(Self {
            path,
            header,
            ids,
            offsets,
            by_id,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn header(&self) -> &StoreHeader {
        &self.header
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.by_id.contains_key(doc_id)
    }

    pub fn get(&self, doc_id: &str) -> Result<TokenEmbeddingMatrix> {
        let index = *self
            .by_id
            .get(doc_id)
            .ok_or_else(|| Error::UnknownDocument(doc_id.to_string()))?;
        self.read_at(index)
    }

    /// Reads the matrix at index position `index`, at the stored precision.
    pub fn read_at(&self, index: usize) -> Result<TokenEmbeddingMatrix> {
        let id = self
            .ids
            .get(index)
            .ok_or_else(|| Error::UnknownDocument(format!("#{index}")))?;
        let n = self.header.positions * self.header.hidden;
        let mut buf = vec![0u8; n * self.header.precision.bytes_per_value()];
        {
            let mut file = self.file.lock().unwrap_or_else(|p| p.into_inner());
            file.seek(SeekFrom::Start(self.offsets[index]))
                .and_then(|_| file.read_exact(&mut buf))
                .map_err(|e| Error::io(&self.path, e))?;
        }
        let (t, h) = (self.header.positions, self.header.hidden);
        let matrix = match self.header.precision {
            Precision::F32 => {
                let values = buf
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                TokenEmbeddingMatrix::from_f32(id.clone(), t, h, values)
            }
            Precision::F16 => {
                let values = buf
                    .chunks_exact(2)
                    .map(|c| f16::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                TokenEmbeddingMatrix::from_f16(id.clone(), t, h, values)
            }
        };
        matrix.map_err(|e| Error::CorruptStore(format!("{}: {e}", self.path.display())))
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<TokenEmbeddingMatrix>> + '_ {
        (0..self.len()).map(move |i| self.read_at(i))
    }
}
