//! Little-endian binary formats for datasets and matrices.
//!
//! Dataset (`PSFA`): magic, `u32` version, `u64` V, `u64` B, B × `u64` T,
//! then the B blocks of `V·T` `f64` values, voxel index fastest.
//!
//! Matrix (`PSFM`): magic, `u32` version, `u64` rows, `u64` cols, then the
//! column-major `f64` payload. Matrices may also be read from CSV, one row per
//! line.

use std::fs;
use std::path::Path;

use crate::model::Dataset;
use crate::numerics::Matrix;
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"PSFA";
pub const MATRIX_MAGIC: &[u8; 4] = b"PSFM";
pub const FORMAT_VERSION: u32 = 1;

/// Appends little-endian fields to a byte buffer.
#[derive(Default)]
pub(crate) struct Writer {
    pub(crate) buf: Vec<u8>,
}

impl Writer {
    pub(crate) fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub(crate) fn u32(&mut self, x: u32) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    pub(crate) fn u64(&mut self, x: u64) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    pub(crate) fn f64(&mut self, x: f64) {
        self.buf.extend_from_slice(&x.to_le_bytes());
    }

    pub(crate) fn f64s(&mut self, xs: &[f64]) {
        self.buf.reserve(8 * xs.len());
        for &x in xs {
            self.f64(x);
        }
    }
}

/// Reads little-endian fields, reporting a short buffer as truncation.
pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    /// Offset of the first payload float, for error messages.
    payload_start: Option<usize>,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(data: &'a [u8]) -> Self {
        Reader {
            data,
            pos: 0,
            payload_start: None,
        }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::TruncatedFile {
                expected: (self.pos + n) as u64,
                found: self.data.len() as u64,
            });
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn magic(&mut self, expected: &'static [u8; 4]) -> Result<()> {
        let name = std::str::from_utf8(expected).expect("ASCII magic");
        match self.take(4) {
            Ok(m) if m == expected => Ok(()),
            _ => Err(Error::BadMagic { expected: name }),
        }
    }

    pub(crate) fn version(&mut self) -> Result<()> {
        match self.u32()? {
            FORMAT_VERSION => Ok(()),
            v => Err(Error::UnsupportedVersion(v)),
        }
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn usize(&mut self) -> Result<usize> {
        let x = self.u64()?;
        usize::try_from(x).map_err(|_| Error::InvalidParameter(format!("size {x} overflows")))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Reads `n` finite floats.
    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let start = *self.payload_start.get_or_insert(self.pos);
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| overflow(n))?)?;
        let offset = (self.pos - bytes.len() - start) / 8;
        bytes
            .chunks_exact(8)
            .enumerate()
            .map(|(i, c)| {
                let x = f64::from_le_bytes(c.try_into().unwrap());
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(Error::NonFiniteValue(offset + i))
                }
            })
            .collect()
    }

    pub(crate) fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let n = rows.checked_mul(cols).ok_or_else(|| overflow(rows))?;
        Matrix::from_col_major(rows, cols, self.f64s(n)?)
    }

    /// Fails unless every byte was consumed.
    pub(crate) fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} trailing bytes after the declared payload",
                self.remaining()
            )));
        }
        Ok(())
    }

    /// Checks up front that `n` more bytes exist, so a corrupt header cannot
    /// trigger a huge allocation.
    pub(crate) fn require(&self, n: u64) -> Result<()> {
        let found = self.data.len() as u64;
        let expected = (self.pos as u64).saturating_add(n);
        if expected > found {
            return Err(Error::TruncatedFile { expected, found });
        }
        Ok(())
    }
}

fn overflow(n: usize) -> Error {
    Error::InvalidParameter(format!("payload size overflows ({n})"))
}

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(DATASET_MAGIC);
    w.u32(FORMAT_VERSION);
    w.u64(ds.voxels() as u64);
    w.u64(ds.n_subjects() as u64);
    for b in 0..ds.n_subjects() {
        w.u64(ds.timepoints(b) as u64);
    }
    for x in ds.subjects() {
        w.f64s(x.as_slice());
    }
    w.buf
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(bytes);
    r.magic(DATASET_MAGIC)?;
    r.version()?;
    let v = r.usize()?;
    let b = r.usize()?;
    r.require((b as u64).saturating_mul(8))?;
    let t: Vec<usize> = (0..b).map(|_| r.usize()).collect::<Result<_>>()?;
    let floats = t
        .iter()
        .fold(0u64, |acc, &ti| acc.saturating_add((v as u64).saturating_mul(ti as u64)));
    r.require(floats.saturating_mul(8))?;
    let subjects = t
        .iter()
        .map(|&ti| r.matrix(v, ti))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Dataset::new(subjects)
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, encode_dataset(ds))?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&fs::read(path)?)
}

pub fn encode_matrix(m: &Matrix) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MATRIX_MAGIC);
    w.u32(FORMAT_VERSION);
    w.u64(m.rows() as u64);
    w.u64(m.cols() as u64);
    w.f64s(m.as_slice());
    w.buf
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Matrix> {
    let mut r = Reader::new(bytes);
    r.magic(MATRIX_MAGIC)?;
    r.version()?;
    let rows = r.usize()?;
    let cols = r.usize()?;
    r.require((rows as u64).saturating_mul(cols as u64).saturating_mul(8))?;
    let m = r.matrix(rows, cols)?;
    r.finish()?;
    Ok(m)
}

pub fn write_matrix(m: &Matrix, path: &Path) -> Result<()> {
    fs::write(path, encode_matrix(m))?;
    Ok(())
}

/// Reads a binary matrix, or CSV when the file does not start with the
/// binary magic.
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(MATRIX_MAGIC) {
        return decode_matrix(&bytes);
    }
    match std::str::from_utf8(&bytes) {
        Ok(text) => parse_csv(text),
        Err(_) => Err(Error::BadMagic { expected: "PSFM" }),
    }
}

/// One row per line, comma separated. Blank lines are skipped.
pub fn parse_csv(text: &str) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|field| {
                let field = field.trim();
                let x: f64 = field.parse().map_err(|_| Error::CsvParse {
                    line: i + 1,
                    message: format!("not a number: {field:?}"),
                })?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(Error::CsvParse {
                        line: i + 1,
                        message: format!("non-finite value {field:?}"),
                    })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::CsvParse {
                    line: i + 1,
                    message: format!("expected {} fields, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::CsvParse {
            line: 0,
            message: "no rows".into(),
        });
    }
    Matrix::from_rows(&rows)
}

/// CSV text with shortest round-trip float formatting.
pub fn format_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(m: &Matrix, path: &Path) -> Result<()> {
    fs::write(path, format_csv(m))?;
    Ok(())
}
