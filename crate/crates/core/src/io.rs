//! Little-endian binary container helpers shared by the model files.
//!
//! Every container starts with an 8-byte magic followed by a one-byte
//! format version. Strings are `u32` length + UTF-8 bytes; matrices are
//! `u64 rows, u64 cols` followed by row-major values.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

pub(crate) fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

pub fn write_header<W: Write>(w: &mut W, magic: &[u8; 8], version: u8) -> io::Result<()> {
    w.write_all(magic)?;
    w.write_u8(version)
}

/// Checks the magic and returns the version byte.
pub fn read_header<R: Read>(r: &mut R, magic: &[u8; 8]) -> io::Result<u8> {
    let mut got = [0u8; 8];
    r.read_exact(&mut got)?;
    if &got != magic {
        return Err(invalid(format!(
            "bad magic: expected {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&got)
        )));
    }
    r.read_u8()
}

pub fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

pub fn read_str<R: Read>(r: &mut R) -> io::Result<String> {
    let len = r.read_u32::<LE>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| invalid(e.to_string()))
}

pub fn write_len<W: Write>(w: &mut W, n: usize) -> io::Result<()> {
    w.write_u64::<LE>(n as u64)
}

pub fn read_len<R: Read>(r: &mut R) -> io::Result<usize> {
    let n = r.read_u64::<LE>()?;
    usize::try_from(n).map_err(|_| invalid("length overflows usize"))
}

/// Matrices are stored in single precision.
pub fn write_matrix_f32<W: Write>(w: &mut W, m: &Array2<f64>) -> io::Result<()> {
    write_len(w, m.nrows())?;
    write_len(w, m.ncols())?;
    for &v in m.iter() {
        w.write_f32::<LE>(v as f32)?;
    }
    Ok(())
}

pub fn read_matrix_f32<R: Read>(r: &mut R) -> io::Result<Array2<f64>> {
    let rows = read_len(r)?;
    let cols = read_len(r)?;
    let n = rows.checked_mul(cols).ok_or_else(|| invalid("matrix too large"))?;
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(r.read_f32::<LE>()? as f64);
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| invalid(e.to_string()))
}

pub fn write_vector_f32<W: Write>(w: &mut W, v: &Array1<f64>) -> io::Result<()> {
    write_len(w, v.len())?;
    for &x in v.iter() {
        w.write_f32::<LE>(x as f32)?;
    }
    Ok(())
}

pub fn read_vector_f32<R: Read>(r: &mut R) -> io::Result<Array1<f64>> {
    let n = read_len(r)?;
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(r.read_f32::<LE>()? as f64);
    }
    Ok(Array1::from(data))
}

pub fn write_f64s<W: Write>(w: &mut W, v: &[f64]) -> io::Result<()> {
    write_len(w, v.len())?;
    for &x in v {
        w.write_f64::<LE>(x)?;
    }
    Ok(())
}

pub fn read_f64s<R: Read>(r: &mut R) -> io::Result<Vec<f64>> {
    let n = read_len(r)?;
    (0..n).map(|_| r.read_f64::<LE>()).collect()
}
