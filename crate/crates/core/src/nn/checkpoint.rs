//! Binary model checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! b"MBLX" | version u32 | kind u8 | layer count u32
//! per layer: inputs u32 | outputs u32 | activation u8
//! per layer: weights f32[out * in] (row-major) | bias f32[out]
//! ```

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, Mlp};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MBLX";
pub const CHECKPOINT_VERSION: u32 = 1;

/// What a checkpointed layer stack represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Plain,
    ImageToSeq,
    SeqToImage,
    Fusion,
}

impl ModelKind {
    fn tag(self) -> u8 {
        match self {
            ModelKind::Plain => 0,
            ModelKind::ImageToSeq => 1,
            ModelKind::SeqToImage => 2,
            ModelKind::Fusion => 3,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => ModelKind::Plain,
            1 => ModelKind::ImageToSeq,
            2 => ModelKind::SeqToImage,
            3 => ModelKind::Fusion,
            _ => return None,
        })
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Checkpoint(e.to_string())
}

pub fn write_checkpoint<T: Scalar, W: Write>(mut w: W, kind: ModelKind, mlp: &Mlp<T>) -> Result<()> {
    let to_u32 = |n: usize| u32::try_from(n).map_err(|_| Error::Checkpoint(format!("dimension {n} exceeds u32")));
    let mut buf = Vec::with_capacity(16 + 4 * mlp.param_count());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.push(kind.tag());
    buf.extend_from_slice(&to_u32(mlp.layers.len())?.to_le_bytes());
    for l in &mlp.layers {
        buf.extend_from_slice(&to_u32(l.inputs())?.to_le_bytes());
        buf.extend_from_slice(&to_u32(l.outputs())?.to_le_bytes());
        buf.push(l.activation.tag());
    }
    for l in &mlp.layers {
        for &x in l.weight.iter().chain(l.bias.iter()) {
            let v = x.to_f32().ok_or_else(|| Error::Checkpoint("parameter not representable".into()))?;
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn read_checkpoint<T: Scalar, R: Read>(mut r: R) -> Result<(ModelKind, Mlp<T>)> {
    fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        r.read_exact(&mut b).map_err(io_err)?;
        Ok(b)
    }
    let magic: [u8; 4] = take(&mut r)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let kind_tag = take::<1, _>(&mut r)?[0];
    let kind = ModelKind::from_tag(kind_tag).ok_or_else(|| Error::Checkpoint(format!("unknown model kind {kind_tag}")))?;
    let count = u32::from_le_bytes(take(&mut r)?) as usize;
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let inputs = u32::from_le_bytes(take(&mut r)?) as usize;
        let outputs = u32::from_le_bytes(take(&mut r)?) as usize;
        let tag = take::<1, _>(&mut r)?[0];
        let act = Activation::from_tag(tag).ok_or_else(|| Error::Checkpoint(format!("unknown activation {tag}")))?;
        shapes.push((inputs, outputs, act));
    }
    let mut read_floats = |n: usize| -> Result<Vec<T>> {
        let mut bytes = vec![0u8; 4 * n];
        r.read_exact(&mut bytes).map_err(io_err)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect())
    };
    let mut layers = Vec::with_capacity(count);
    for (inputs, outputs, act) in shapes {
        let w = read_floats(inputs * outputs)?;
        let b = read_floats(outputs)?;
        let weight = Array2::from_shape_vec((outputs, inputs), w).map_err(|e| Error::Checkpoint(e.to_string()))?;
        layers.push(DenseLayer::new(weight, Array1::from(b), act)?);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(io_err)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after parameters".into()));
    }
    Ok((kind, Mlp::from_layers(layers)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_exact_for_f32() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mlp = Mlp::<f32>::glorot(&[5, 7, 3], &[Activation::Relu, Activation::Tanh], &mut rng).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, ModelKind::Fusion, &mlp).unwrap();
        assert_eq!(&buf[..4], b"MBLX");
        assert_eq!(buf.len(), 4 + 4 + 1 + 4 + 2 * 9 + 4 * mlp.param_count());
        let (kind, back) = read_checkpoint::<f32, _>(&buf[..]).unwrap();
        assert_eq!(kind, ModelKind::Fusion);
        assert_eq!(back, mlp);
    }

    #[test]
    fn corrupt_input_rejected() {
        assert!(read_checkpoint::<f32, _>(&b"XXXX"[..]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mlp = Mlp::<f32>::glorot(&[2, 2], &[Activation::Linear], &mut rng).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, ModelKind::Plain, &mlp).unwrap();
        assert!(read_checkpoint::<f32, _>(&buf[..buf.len() - 1]).is_err());
        buf.push(0);
        assert!(read_checkpoint::<f32, _>(&buf[..]).is_err());
    }
}
