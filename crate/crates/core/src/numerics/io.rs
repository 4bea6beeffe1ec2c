//! Binary matrix format: `LGX1`, `u64` rows, `u64` cols (little endian), then
//! row-major little-endian `f64` values.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::DenseMatrix;

pub const MATRIX_MAGIC: &[u8; 4] = b"LGX1";

pub fn write_matrix<W: Write>(mut w: W, m: &DenseMatrix) -> io::Result<()> {
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for v in m.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_matrix<R: Read>(mut r: R) -> io::Result<DenseMatrix> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MATRIX_MAGIC {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("bad matrix magic {magic:?}"),
        ));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word) as usize;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "matrix dimensions overflow"))?;
    let mut data = Vec::with_capacity(len.min(1 << 28));
    for _ in 0..len {
        r.read_exact(&mut word)?;
        data.push(f64::from_le_bytes(word));
    }
    DenseMatrix::from_vec(rows, cols, data).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
}

pub fn save_matrix(path: impl AsRef<Path>, m: &DenseMatrix) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix(&mut w, m)?;
    w.flush()
}

pub fn load_matrix(path: impl AsRef<Path>) -> io::Result<DenseMatrix> {
    read_matrix(BufReader::new(File::open(path)?))
}
