//! `CWM1` model checkpoints: magic, `u32` layer count, then per layer
//! `u32` rows, `u32` cols, row-major `f32` weights and `f32` biases, all
//! little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Layer, MlpModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CWM1";

pub fn write_model<W: Write>(mut w: W, model: &MlpModel) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(model.layers.len() as u32).to_le_bytes())?;
    for l in &model.layers {
        w.write_all(&(l.weights.nrows() as u32).to_le_bytes())?;
        w.write_all(&(l.weights.ncols() as u32).to_le_bytes())?;
        for v in l.weights.iter().chain(l.bias.iter()) {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_model<R: Read>(mut r: R) -> Result<MlpModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("missing CWM1 magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad model magic".into()));
    }
    let n_layers = read_u32(&mut r)? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let w = read_f32s(&mut r, rows * cols)?;
        let b = read_f32s(&mut r, cols)?;
        layers.push(Layer {
            weights: Array2::from_shape_vec((rows, cols), w)
                .map_err(|e| Error::Format(e.to_string()))?,
            bias: Array1::from_vec(b),
        });
    }
    MlpModel::from_layers(layers)
}

pub fn save_model(path: impl AsRef<Path>, model: &MlpModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel> {
    read_model(BufReader::new(File::open(path)?))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("truncated model header".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("truncated model payload".into()))?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_model, MlpConfig};

    #[test]
    fn checkpoint_round_trip_at_f32_precision() {
        let m = init_model(&MlpConfig {
            input_dim: 5,
            hidden_dims: vec![4, 3],
            n_classes: 2,
            seed: 1,
        })
        .unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, &m).unwrap();
        assert_eq!(&buf[..4], b"CWM1");
        assert_eq!(&buf[4..8], &3u32.to_le_bytes());
        assert_eq!(
            buf.len(),
            8 + 3 * 8 + 4 * (5 * 4 + 4 + 4 * 3 + 3 + 3 * 2 + 2)
        );
        let back = read_model(&buf[..]).unwrap();
        for (a, b) in m.layers.iter().zip(&back.layers) {
            assert_eq!(a.weights.dim(), b.weights.dim());
            for (x, y) in a.weights.iter().zip(b.weights.iter()) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
        // writing the reloaded model is byte-stable
        let mut again = Vec::new();
        write_model(&mut again, &back).unwrap();
        assert_eq!(buf, again);
        assert!(read_model(&buf[..buf.len() - 1]).is_err());
    }
}
