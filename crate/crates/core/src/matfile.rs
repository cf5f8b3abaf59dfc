//! Minimal matrix container.
//!
//! Layout: a 4-byte little-endian header length, a JSON header
//! `{name, rows, cols, dtype, gamma?, description}`, then `rows * cols`
//! row-major little-endian values. Checkpoints are a JSON preamble in the
//! same length-prefixed framing followed by concatenated containers.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixHeader {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub dtype: Dtype,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixContainer {
    pub header: MatrixHeader,
    pub data: Array2<f64>,
}

impl MatrixContainer {
    pub fn new(name: impl Into<String>, data: Array2<f64>, dtype: Dtype) -> Self {
        MatrixContainer {
            header: MatrixHeader {
                name: name.into(),
                rows: data.nrows(),
                cols: data.ncols(),
                dtype,
                gamma: None,
                description: String::new(),
            },
            data,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.header.gamma = Some(gamma);
        self
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.header.description = description.into();
        self
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let header = serde_json::to_vec(&self.header).map_err(std::io::Error::other)?;
        write_frame(w, &header)?;
        let mut buf = Vec::with_capacity(self.data.len() * self.header.dtype.size());
        for &v in self.data.iter() {
            match self.header.dtype {
                Dtype::F32 => buf.extend_from_slice(&(v as f32).to_le_bytes()),
                Dtype::F64 => buf.extend_from_slice(&v.to_le_bytes()),
            }
        }
        w.write_all(&buf)
    }

    /// Reads the next container, or `None` at a clean end of stream.
    pub fn read_from<R: Read>(r: &mut R) -> std::io::Result<Option<Self>> {
        let Some(header) = read_frame(r)? else {
            return Ok(None);
        };
        let header: MatrixHeader = serde_json::from_slice(&header).map_err(invalid)?;
        let count = header
            .rows
            .checked_mul(header.cols)
            .ok_or_else(|| invalid("matrix too large"))?;
        let mut raw = vec![0u8; count * header.dtype.size()];
        r.read_exact(&mut raw)?;
        let values: Vec<f64> = match header.dtype {
            Dtype::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            Dtype::F64 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        };
        let data = Array2::from_shape_vec((header.rows, header.cols), values).map_err(invalid)?;
        Ok(Some(MatrixContainer { header, data }))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).map_err(|e| Error::io(path, e))?;
        write_atomic(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut cur = bytes.as_slice();
        let m = Self::read_from(&mut cur)
            .map_err(|e| malformed(path, e))?
            .ok_or_else(|| malformed(path, "empty matrix file"))?;
        if !cur.is_empty() {
            return Err(malformed(path, "trailing bytes after matrix payload"));
        }
        Ok(m)
    }
}

/// Length-prefixed JSON preamble followed by any number of containers.
pub fn write_bundle<W: Write>(
    w: &mut W,
    preamble: &serde_json::Value,
    matrices: &[MatrixContainer],
) -> std::io::Result<()> {
    let bytes = serde_json::to_vec(preamble).map_err(std::io::Error::other)?;
    write_frame(w, &bytes)?;
    for m in matrices {
        m.write_to(w)?;
    }
    Ok(())
}

pub fn read_bundle<R: Read>(r: &mut R) -> std::io::Result<(serde_json::Value, Vec<MatrixContainer>)> {
    let preamble = read_frame(r)?.ok_or_else(|| invalid("missing preamble"))?;
    let preamble = serde_json::from_slice(&preamble).map_err(invalid)?;
    let mut matrices = Vec::new();
    while let Some(m) = MatrixContainer::read_from(r)? {
        matrices.push(m);
    }
    Ok((preamble, matrices))
}

/// Writes via a sibling temp file and rename so readers never see a torn file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_frame<W: Write>(w: &mut W, bytes: &[u8]) -> std::io::Result<()> {
    let len = u32::try_from(bytes.len()).map_err(|_| invalid("header exceeds 4 GiB"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(bytes)
}

fn read_frame<R: Read>(r: &mut R) -> std::io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        let n = r.read(&mut len[got..])?;
        if n == 0 {
            return if got == 0 {
                Ok(None)
            } else {
                Err(invalid("truncated length prefix"))
            };
        }
        got += n;
    }
    let mut buf = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

fn invalid<E: ToString>(e: E) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string())
}

pub(crate) fn malformed<E: ToString>(path: &Path, e: E) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        line: 0,
        reason: e.to_string(),
    }
}
