//! `.dmat`: two little-endian `u64` dimensions (rows, cols) followed by
//! `rows * cols` little-endian `f64` values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DenseMatrix, LinalgError};

pub fn write_dmat(m: &DenseMatrix, path: &Path) -> Result<(), LinalgError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for v in m.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dmat(path: &Path) -> Result<DenseMatrix, LinalgError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word) as usize;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| LinalgError::Format(format!("dimensions {rows}x{cols} overflow")))?;
    let mut data = Vec::with_capacity(len);
    for k in 0..len {
        r.read_exact(&mut word)
            .map_err(|_| LinalgError::Format(format!("truncated after {k} of {len} values")))?;
        data.push(f64::from_le_bytes(word));
    }
    if r.read(&mut word)? != 0 {
        return Err(LinalgError::Format("trailing bytes".into()));
    }
    DenseMatrix::from_row_major(rows, cols, data)
}
