//! Per-token output embeddings: the matrix type, half-precision conversion,
//! the on-disk store and a deterministic stand-in encoder.

mod fp16;
mod store;
mod toy;

use std::borrow::Cow;

use half::f16;
use serde::Serialize;

use crate::error::{Error, Result};

pub use fp16::{f16_slice_to_f32, f32_slice_to_f16, f32_to_f16_clamped, F16_MAX};
pub use store::{EmbeddingStore, StoreHeader, StoreWriter, STORE_MAGIC, STORE_VERSION};
pub use toy::{toy_encode, toy_token_ids, write_toy_store, ToyEncoderConfig, CLS_ID, PAD_ID};

/// Default number of token positions per document.
pub const DEFAULT_POSITIONS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F16,
}

impl Precision {
    pub fn code(self) -> u8 {
        match self {
            Precision::F32 => 0,
            Precision::F16 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Precision::F32),
            1 => Some(Precision::F16),
            _ => None,
        }
    }

    pub fn bytes_per_value(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F16 => 2,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "f32" | "float32" => Ok(Precision::F32),
            "f16" | "float16" => Ok(Precision::F16),
            other => Err(Error::InvalidConfig(format!("unknown precision `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatrixData {
    F32(Vec<f32>),
    F16(Vec<f16>),
}

/// Row-major `positions × hidden` matrix of token output vectors for one
/// document. Row 0 is the classification-token slot.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddingMatrix {
    doc_id: String,
    positions: usize,
    hidden: usize,
    data: MatrixData,
}

impl TokenEmbeddingMatrix {
    pub fn from_f32(
        doc_id: impl Into<String>,
        positions: usize,
        hidden: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        let doc_id = doc_id.into();
        check_shape(&doc_id, positions, hidden, data.len())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("matrix `{doc_id}` at flat index {i}")));
        }
        Ok(Self {
            doc_id,
            positions,
            hidden,
            data: MatrixData::F32(data),
        })
    }

    pub fn from_f16(
        doc_id: impl Into<String>,
        positions: usize,
        hidden: usize,
        data: Vec<f16>,
    ) -> Result<Self> {
        let doc_id = doc_id.into();
        check_shape(&doc_id, positions, hidden, data.len())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("matrix `{doc_id}` at flat index {i}")));
        }
        Ok(Self {
            doc_id,
            positions,
            hidden,
            data: MatrixData::F16(data),
        })
    }

    /// Builds a matrix from rows of equal length.
    pub fn from_rows(doc_id: impl Into<String>, rows: &[Vec<f32>]) -> Result<Self> {
        let hidden = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != hidden) {
            return Err(Error::ShapeError("rows have different lengths".into()));
        }
        Self::from_f32(doc_id, rows.len(), hidden, rows.concat())
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn positions(&self) -> usize {
        self.positions
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.positions, self.hidden)
    }

    pub fn precision(&self) -> Precision {
        match self.data {
            MatrixData::F32(_) => Precision::F32,
            MatrixData::F16(_) => Precision::F16,
        }
    }

    pub fn data(&self) -> &MatrixData {
        &self.data
    }

    /// Values widened to f32 (borrowed when already stored as f32).
    pub fn values_f32(&self) -> Cow<'_, [f32]> {
        match &self.data {
            MatrixData::F32(v) => Cow::Borrowed(v),
            MatrixData::F16(v) => Cow::Owned(f16_slice_to_f32(v)),
        }
    }

    /// Keeps the first `positions` rows.
    pub fn truncated(&self, positions: usize) -> Result<Self> {
        if positions == 0 || positions > self.positions {
            return Err(Error::ShapeError(format!(
                "cannot keep {positions} of {} positions",
                self.positions
            )));
        }
        let n = positions * self.hidden;
        let data = match &self.data {
            MatrixData::F32(v) => MatrixData::F32(v[..n].to_vec()),
            MatrixData::F16(v) => MatrixData::F16(v[..n].to_vec()),
        };
        Ok(Self {
            doc_id: self.doc_id.clone(),
            positions,
            hidden: self.hidden,
            data,
        })
    }

    /// Half-precision copy plus the number of values clamped to ±65504.
    pub fn to_f16(&self) -> (Self, usize) {
        match &self.data {
            MatrixData::F16(_) => (self.clone(), 0),
            MatrixData::F32(v) => {
                let (half, clamped) = f32_slice_to_f16(v);
                if clamped > 0 {
                    log::warn!(
                        "{clamped} values of `{}` exceeded the f16 range and were clamped",
                        self.doc_id
                    );
                }
                let m = Self {
                    doc_id: self.doc_id.clone(),
                    positions: self.positions,
                    hidden: self.hidden,
                    data: MatrixData::F16(half),
                };
                (m, clamped)
            }
        }
    }

    pub fn to_f32(&self) -> Self {
        Self {
            doc_id: self.doc_id.clone(),
            positions: self.positions,
            hidden: self.hidden,
            data: MatrixData::F32(self.values_f32().into_owned()),
        }
    }
}

fn check_shape(doc_id: &str, positions: usize, hidden: usize, len: usize) -> Result<()> {
    if positions == 0 || hidden == 0 {
        return Err(Error::ShapeError(format!(
            "matrix `{doc_id}` must have at least one position and one channel"
        )));
    }
    if positions.checked_mul(hidden) != Some(len) {
        return Err(Error::ShapeError(format!(
            "matrix `{doc_id}` declared {positions}x{hidden} but holds {len} values"
        )));
    }
    Ok(())
}
