//! The RFM1 binary matrix format.
//!
//! Layout (all integers little-endian):
//!
//! | bytes  | content                              |
//! |--------|--------------------------------------|
//! | 0–3    | ASCII `RFM1`                         |
//! | 4      | version, always 1                    |
//! | 5      | dtype: 0 = f32, 1 = f64              |
//! | 6–7    | zero padding                         |
//! | 8–15   | rows (u64)                           |
//! | 16–23  | cols (u64)                           |
//! | 24–    | rows × cols values, row-major        |
//!
//! The header is exactly 24 bytes. Payload values must be finite.

use super::{find_non_finite, ModelIoError, ReprMatrix};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub(crate) const MAGIC: &[u8; 4] = b"RFM1";
pub(crate) const VERSION: u8 = 1;
pub(crate) const HEADER_LEN: usize = 24;

/// On-disk element type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self, ModelIoError> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            other => Err(ModelIoError::UnsupportedDtype(other)),
        }
    }

    fn value_len(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Parsed RFM1 header, available without loading the payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixHeader {
    pub rows: u64,
    pub cols: u64,
    pub dtype: Dtype,
}

fn open(path: &Path) -> Result<File, ModelIoError> {
    if !path.is_file() {
        return Err(ModelIoError::MissingFile(path.to_path_buf()));
    }
    File::open(path).map_err(ModelIoError::Io)
}

fn parse_header(buf: &[u8; HEADER_LEN]) -> Result<MatrixHeader, ModelIoError> {
    if &buf[0..4] != MAGIC {
        return Err(ModelIoError::BadMagic);
    }
    if buf[4] != VERSION {
        return Err(ModelIoError::UnsupportedVersion(buf[4]));
    }
    let dtype = Dtype::from_code(buf[5])?;
    if buf[6] != 0 || buf[7] != 0 {
        return Err(ModelIoError::BadPadding);
    }
    let rows = u64::from_le_bytes(buf[8..16].try_into().unwrap());
    let cols = u64::from_le_bytes(buf[16..24].try_into().unwrap());
    if rows == 0 || cols == 0 {
        return Err(ModelIoError::EmptyMatrix);
    }
    Ok(MatrixHeader { rows, cols, dtype })
}

/// Reads only the 24-byte header. Used for manifest validation, where
/// dimensions are needed but payloads are not.
pub fn read_matrix_header(path: impl AsRef<Path>) -> Result<MatrixHeader, ModelIoError> {
    let path = path.as_ref();
    let mut reader = BufReader::new(open(path)?);
    let mut buf = [0u8; HEADER_LEN];
    reader
        .read_exact(&mut buf)
        .map_err(|_| ModelIoError::TruncatedPayload {
            declared: HEADER_LEN as u64,
            actual: std::fs::metadata(path).map(|m| m.len()).unwrap_or(0),
        })?;
    parse_header(&buf)
}

/// Reads a full matrix. Metadata labels default to the empty group, layer 0
/// and category `"ALL"`; manifest loading is what attaches real labels.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<ReprMatrix, ModelIoError> {
    let path = path.as_ref();
    let file = open(path)?;
    let file_len = file.metadata()?.len();
    let mut reader = BufReader::new(file);

    let mut buf = [0u8; HEADER_LEN];
    reader
        .read_exact(&mut buf)
        .map_err(|_| ModelIoError::TruncatedPayload {
            declared: HEADER_LEN as u64,
            actual: file_len,
        })?;
    let header = parse_header(&buf)?;

    let count = header
        .rows
        .checked_mul(header.cols)
        .ok_or(ModelIoError::TruncatedPayload {
            declared: u64::MAX,
            actual: file_len,
        })?;
    let payload_len = count
        .checked_mul(header.dtype.value_len() as u64)
        .ok_or(ModelIoError::TruncatedPayload {
            declared: u64::MAX,
            actual: file_len,
        })?;
    let declared = HEADER_LEN as u64 + payload_len;
    if file_len < declared {
        return Err(ModelIoError::TruncatedPayload {
            declared,
            actual: file_len,
        });
    }
    if file_len > declared {
        return Err(ModelIoError::TrailingData {
            actual: file_len - declared,
        });
    }

    let rows = header.rows as usize;
    let cols = header.cols as usize;
    let mut values = Vec::with_capacity(rows * cols);
    match header.dtype {
        Dtype::F32 => {
            let mut b = [0u8; 4];
            for _ in 0..count {
                reader.read_exact(&mut b)?;
                values.push(f32::from_le_bytes(b) as f64);
            }
        }
        Dtype::F64 => {
            let mut b = [0u8; 8];
            for _ in 0..count {
                reader.read_exact(&mut b)?;
                values.push(f64::from_le_bytes(b));
            }
        }
    }

    let matrix = DMatrix::from_row_slice(rows, cols, &values);
    if let Some((r, c)) = find_non_finite(&matrix) {
        return Err(ModelIoError::NonFiniteValue { row: r, col: c });
    }
    let mut repr = ReprMatrix::new(matrix)?;
    repr.dtype = header.dtype;
    Ok(repr)
}

/// Writes a matrix in the RFM1 format, honoring the matrix's dtype.
///
/// For `Dtype::F32` every value must be exactly representable as f32, so a
/// read → write cycle leaves files byte-identical regardless of dtype.
pub fn write_matrix(matrix: &ReprMatrix, path: impl AsRef<Path>) -> Result<(), ModelIoError> {
    if matrix.rows() == 0 || matrix.cols() == 0 {
        return Err(ModelIoError::EmptyMatrix);
    }
    if let Some((r, c)) = find_non_finite(&matrix.values) {
        return Err(ModelIoError::NonFiniteValue { row: r, col: c });
    }

    let file = File::create(path.as_ref()).map_err(ModelIoError::Io)?;
    let mut writer = BufWriter::new(file);

    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(MAGIC);
    header[4] = VERSION;
    header[5] = matrix.dtype.code();
    header[8..16].copy_from_slice(&(matrix.rows() as u64).to_le_bytes());
    header[16..24].copy_from_slice(&(matrix.cols() as u64).to_le_bytes());
    writer.write_all(&header)?;

    for r in 0..matrix.rows() {
        for c in 0..matrix.cols() {
            let v = matrix.values[(r, c)];
            match matrix.dtype {
                Dtype::F32 => {
                    let narrow = v as f32;
                    if f64::from(narrow) != v {
                        return Err(ModelIoError::NotRepresentable { row: r, col: c });
                    }
                    writer.write_all(&narrow.to_le_bytes())?;
                }
                Dtype::F64 => writer.write_all(&v.to_le_bytes())?,
            }
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn repr(rows: usize, cols: usize, values: &[f64]) -> ReprMatrix {
        ReprMatrix::new(DMatrix::from_row_slice(rows, cols, values)).unwrap()
    }

    #[test]
    fn identity_payload_reads_back() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("eye.rfm");
        write_matrix(&repr(2, 2, &[1.0, 0.0, 0.0, 1.0]), &path).unwrap();
        let m = read_matrix(&path).unwrap();
        assert_eq!(m.values, DMatrix::identity(2, 2));
    }

    #[test]
    fn zero_payload_reads_back() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("zero.rfm");
        write_matrix(&repr(3, 1, &[0.0, 0.0, 0.0]), &path).unwrap();
        let m = read_matrix(&path).unwrap();
        assert_eq!(m.rows(), 3);
        assert_eq!(m.cols(), 1);
        assert!(m.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_by_one_file_is_header_plus_one_value() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("scalar.rfm");
        write_matrix(&repr(1, 1, &[42.0]), &path).unwrap();
        // 24-byte header + one f64 payload value.
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 32);
    }

    #[test]
    fn identity_payload_bytes_are_little_endian() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("eye.rfm");
        write_matrix(&repr(2, 2, &[1.0, 0.0, 0.0, 1.0]), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let payload = &bytes[HEADER_LEN..];
        let expect: Vec<u8> = [1.0f64, 0.0, 0.0, 1.0]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        assert_eq!(payload, &expect[..]);
    }

    #[test]
    fn nan_is_rejected_on_write() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.rfm");
        let mut m = repr(1, 2, &[1.0, 2.0]);
        m.values[(0, 1)] = f64::NAN;
        match write_matrix(&m, &path) {
            Err(ModelIoError::NonFiniteValue { row: 0, col: 1 }) => {}
            other => panic!("expected NonFiniteValue, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_reported() {
        match read_matrix("/nonexistent/never.rfm") {
            Err(ModelIoError::MissingFile(_)) => {}
            other => panic!("expected MissingFile, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("junk.rfm");
        std::fs::write(&path, b"NOPE\x01\x01\x00\x00aaaaaaaabbbbbbbb").unwrap();
        match read_matrix(&path) {
            Err(ModelIoError::BadMagic) => {}
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("eye.rfm");
        write_matrix(&repr(2, 2, &[1.0, 0.0, 0.0, 1.0]), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        match read_matrix(&path) {
            Err(ModelIoError::TruncatedPayload { .. }) => {}
            other => panic!("expected TruncatedPayload, got {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("eye.rfm");
        write_matrix(&repr(1, 1, &[1.0]), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        match read_matrix(&path) {
            Err(ModelIoError::TrailingData { actual: 1 }) => {}
            other => panic!("expected TrailingData, got {other:?}"),
        }
    }

    #[test]
    fn f32_files_round_trip_byte_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("small.rfm");
        let mut m = repr(2, 3, &[0.5, 1.25, -3.0, 0.0, 7.5, 100.0]);
        m.dtype = Dtype::F32;
        write_matrix(&m, &path).unwrap();
        let first = std::fs::read(&path).unwrap();

        let back = read_matrix(&path).unwrap();
        assert_eq!(back.dtype, Dtype::F32);
        let rewritten = dir.path().join("small2.rfm");
        write_matrix(&back, &rewritten).unwrap();
        assert_eq!(first, std::fs::read(&rewritten).unwrap());
    }

    #[test]
    fn header_check_reads_dimensions_only() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("dims.rfm");
        write_matrix(&repr(4, 7, &vec![1.0; 28]), &path).unwrap();
        let h = read_matrix_header(&path).unwrap();
        assert_eq!((h.rows, h.cols, h.dtype), (4, 7, Dtype::F64));
    }
}
