//! Binary `CWF1` feature files, `CWL1` label files and CSV export.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::FrameMatrix;
use crate::error::{Error, Result};

const FEATURE_MAGIC: &[u8; 4] = b"CWF1";
const LABEL_MAGIC: &[u8; 4] = b"CWL1";

/// Magic, `u32` rows, `u32` cols, then row-major `f32` values (little-endian).
pub fn write_features<W: Write>(mut w: W, data: &Array2<f64>) -> Result<()> {
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&u32_len(data.nrows())?.to_le_bytes())?;
    w.write_all(&u32_len(data.ncols())?.to_le_bytes())?;
    for v in data.iter() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_features<R: Read>(mut r: R) -> Result<Array2<f64>> {
    expect_magic(&mut r, FEATURE_MAGIC)?;
    let rows = read_u32(&mut r)? as usize;
    let cols = read_u32(&mut r)? as usize;
    let mut buf = vec![0u8; rows * cols * 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("truncated CWF1 payload".into()))?;
    let values = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Format(e.to_string()))
}

/// Magic, `u32` count, then `i32` labels (little-endian).
pub fn write_labels<W: Write>(mut w: W, labels: &[usize]) -> Result<()> {
    w.write_all(LABEL_MAGIC)?;
    w.write_all(&u32_len(labels.len())?.to_le_bytes())?;
    for &l in labels {
        let v = i32::try_from(l).map_err(|_| Error::Format(format!("label {l} too large")))?;
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_labels<R: Read>(mut r: R) -> Result<Vec<usize>> {
    expect_magic(&mut r, LABEL_MAGIC)?;
    let n = read_u32(&mut r)? as usize;
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("truncated CWL1 payload".into()))?;
    buf.chunks_exact(4)
        .map(|c| {
            let v = i32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            usize::try_from(v).map_err(|_| Error::Format(format!("negative label {v}")))
        })
        .collect()
}

pub fn save_features(path: impl AsRef<Path>, data: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_features(&mut w, data)?;
    w.flush()?;
    Ok(())
}

pub fn load_features(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    read_features(BufReader::new(File::open(path)?))
}

pub fn save_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_labels(&mut w, labels)?;
    w.flush()?;
    Ok(())
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    read_labels(BufReader::new(File::open(path)?))
}

/// One frame per line after a `time,f0,f1,...[,label]` header.
pub fn write_csv<W: Write>(mut w: W, m: &FrameMatrix) -> Result<()> {
    let mut header = vec!["time".to_string()];
    header.extend((0..m.n_features()).map(|i| format!("f{i}")));
    if m.labels.is_some() {
        header.push("label".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for (k, row) in m.data.outer_iter().enumerate() {
        let mut line = format!("{:.6}", m.frame_times.get(k).copied().unwrap_or(k as f64));
        for v in row {
            line.push_str(&format!(",{v:.6}"));
        }
        if let Some(l) = &m.labels {
            line.push_str(&format!(",{}", l[k]));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn u32_len(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("dimension {n} exceeds u32")))
}

fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)
        .map_err(|_| Error::Format("missing magic".into()))?;
    if &m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("truncated header".into()))?;
    Ok(u32::from_le_bytes(b))
}
