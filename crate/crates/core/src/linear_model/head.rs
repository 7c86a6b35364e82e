use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::Features;
use crate::error::{Error, Result};
use crate::pooling::AggregationStrategy;

pub const HEAD_MAGIC: [u8; 4] = *b"LRHD";
const HEAD_VERSION: u8 = 1;

/// Which representation a head was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InputKind {
    Tfidf,
    Embedding {
        strategy: AggregationStrategy,
        model_tag: String,
    },
}

impl fmt::Display for InputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputKind::Tfidf => f.write_str("tfidf"),
            InputKind::Embedding {
                strategy,
                model_tag,
            } => write!(f, "embedding:{strategy}:{model_tag}"),
        }
    }
}

impl FromStr for InputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "tfidf" {
            return Ok(InputKind::Tfidf);
        }
        let mut parts = s.splitn(3, ':');
        match (parts.next(), parts.next(), parts.next()) {
            (Some("embedding"), Some(strategy), Some(model_tag)) => Ok(InputKind::Embedding {
                strategy: strategy.parse()?,
                model_tag: model_tag.to_string(),
            }),
            _ => Err(Error::InvalidConfig(format!("unknown input kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearHead {
    pub weights: Vec<f32>,
    pub bias: f32,
    pub trained_on: String,
    pub input_kind: InputKind,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LinearHead {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `w · x + b`.
    pub fn logit<R: Features + ?Sized>(&self, x: &R) -> Result<f64> {
        if x.dim() != self.dim() {
            return Err(Error::ShapeError(format!(
                "head expects dimension {}, input has {}",
                self.dim(),
                x.dim()
            )));
        }
        let mut z = self.bias as f64;
        x.for_each_entry(|i, v| z += self.weights[i] as f64 * v);
        Ok(z)
    }

    pub fn predict_proba<R: Features + ?Sized>(&self, x: &R) -> Result<f64> {
        self.logit(x).map(sigmoid)
    }

    pub fn predict_batch<R: Features>(&self, xs: &[R]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.predict_proba(x)).collect()
    }

    /// Serializes as `LRHD | version u8 | D u64 | kind_len u16 | kind
    /// | name_len u16 | name | D × f32 weights | f32 bias`, little-endian.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let kind = self.input_kind.to_string();
        if kind.len() > u16::MAX as usize || self.trained_on.len() > u16::MAX as usize {
            return Err(Error::InvalidConfig("head metadata longer than 65535 bytes".into()));
        }
        let mut out = Vec::with_capacity(32 + kind.len() + self.trained_on.len() + 4 * self.dim());
        out.extend_from_slice(&HEAD_MAGIC);
        out.push(HEAD_VERSION);
        out.extend_from_slice(&(self.dim() as u64).to_le_bytes());
        out.extend_from_slice(&(kind.len() as u16).to_le_bytes());
        out.extend_from_slice(kind.as_bytes());
        out.extend_from_slice(&(self.trained_on.len() as u16).to_le_bytes());
        out.extend_from_slice(self.trained_on.as_bytes());
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.extend_from_slice(&self.bias.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |msg: &str| Error::CorruptStore(format!("head file: {msg}"));
        let mut cursor = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cursor.len() < n {
                return Err(corrupt("truncated"));
            }
            let (head, tail) = cursor.split_at(n);
            cursor = tail;
            Ok(head)
        };
        if take(4)? != HEAD_MAGIC {
            return Err(corrupt("bad magic"));
        }
        if take(1)?[0] != HEAD_VERSION {
            return Err(corrupt("unsupported version"));
        }
        let dim = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let kind_len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
        let kind = std::str::from_utf8(take(kind_len)?).map_err(|_| corrupt("kind is not UTF-8"))?;
        let input_kind = kind.parse()?;
        let name_len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
        let trained_on = std::str::from_utf8(take(name_len)?)
            .map_err(|_| corrupt("dataset name is not UTF-8"))?
            .to_string();
        let dim = usize::try_from(dim).map_err(|_| corrupt("dimension overflows"))?;
        let payload = take(dim.checked_mul(4).ok_or_else(|| corrupt("dimension overflows"))?)?;
        let weights: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let bias = f32::from_le_bytes(take(4)?.try_into().unwrap());
        if !cursor.is_empty() {
            return Err(corrupt("trailing bytes"));
        }
        if weights.iter().chain(std::iter::once(&bias)).any(|w| !w.is_finite()) {
            return Err(corrupt("non-finite parameter"));
        }
        Ok(Self {
            weights,
            bias,
            trained_on,
            input_kind,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn predict_proba<R: Features + ?Sized>(head: &LinearHead, x: &R) -> Result<f64> {
    head.predict_proba(x)
}
