//! Matrix file format: little-endian `u64` rows, `u64` cols, then
//! `rows * cols` IEEE-754 doubles in column-major order.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Matrix;

pub fn write_matrix<W: Write>(mut w: W, m: &Matrix) -> io::Result<()> {
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for j in 0..m.cols() {
        for v in m.col(j) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn read_matrix<R: Read>(mut r: R) -> io::Result<Matrix> {
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word);
    r.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word);

    let count = rows
        .checked_mul(cols)
        .and_then(|c| usize::try_from(c).ok())
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "matrix dimensions overflow"))?;
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut word)?;
        data.push(f64::from_le_bytes(word));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "trailing bytes after matrix"));
    }
    Matrix::from_col_major(rows as usize, cols as usize, data)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

pub fn save_matrix(path: impl AsRef<Path>, m: &Matrix) -> io::Result<()> {
    write_matrix(BufWriter::new(File::create(path)?), m)
}

pub fn load_matrix(path: impl AsRef<Path>) -> io::Result<Matrix> {
    read_matrix(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_bit_exact() {
        let m = Matrix::from_col_major(2, 1, vec![1.0, -2.0]).unwrap();
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        let mut expected = Vec::new();
        expected.extend_from_slice(&2u64.to_le_bytes());
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&1.0f64.to_le_bytes());
        expected.extend_from_slice(&(-2.0f64).to_le_bytes());
        assert_eq!(buf, expected);
        assert!(read_matrix(&buf[..]).unwrap().bitwise_eq(&m));
    }

    #[test]
    fn padding_is_not_written() {
        let mut m = Matrix::zeros_with_ld(1, 2, 4);
        m.set(0, 1, 3.0);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 16 + 2 * 8);
    }

    #[test]
    fn truncated_and_trailing_input() {
        let m = Matrix::identity(2);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        assert!(read_matrix(&buf[..buf.len() - 1]).is_err());
        buf.push(0);
        assert!(read_matrix(&buf[..]).is_err());
    }
}
