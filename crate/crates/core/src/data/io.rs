//! Flat binary dataset container.
//!
//! ```text
//! magic   "MSMAE-DS"           8 bytes
//! version u32 LE               currently 1
//! count, C, H, W  u32 LE each
//! count x { label u32 LE, C*H*W f32 LE pixels }
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DATASET_MAGIC: &[u8; 8] = b"MSMAE-DS";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct RawSample {
    pub label: u32,
    pub pixels: Tensor,
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_dataset<'a>(
    w: &mut impl Write,
    samples: impl IntoIterator<Item = (u32, &'a Tensor)>,
) -> Result<()> {
    let samples: Vec<(u32, &Tensor)> = samples.into_iter().collect();
    let shape = match samples.first() {
        Some((_, t)) => t.shape().to_vec(),
        None => vec![0, 0, 0],
    };
    if shape.len() != 3 {
        return Err(Error::Format(format!("pixels must be [C, H, W], got {shape:?}")));
    }
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(samples.len() as u32).to_le_bytes())?;
    for d in &shape {
        w.write_all(&(*d as u32).to_le_bytes())?;
    }
    for (label, t) in samples {
        if t.shape() != shape.as_slice() {
            return Err(Error::Format(format!("mixed shapes {:?} and {shape:?}", t.shape())));
        }
        w.write_all(&label.to_le_bytes())?;
        let bytes: Vec<u8> = t.data().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        w.write_all(&bytes)?;
    }
    Ok(())
}

pub fn read_dataset(r: &mut impl Read) -> Result<Vec<RawSample>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::Format("not a MSMAE-DS dataset".into()));
    }
    let version = read_u32(r)?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let count = read_u32(r)? as usize;
    let (c, h, w) = (read_u32(r)? as usize, read_u32(r)? as usize, read_u32(r)? as usize);
    let n = c * h * w;
    let mut out = Vec::with_capacity(count);
    let mut buf = vec![0u8; n * 4];
    for _ in 0..count {
        let label = read_u32(r)?;
        r.read_exact(&mut buf)?;
        let pixels = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        out.push(RawSample {
            label,
            pixels: Tensor::from_vec(pixels, &[c, h, w])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_at_single_precision() {
        let a = Tensor::from_vec(vec![0.0, 0.25, 0.5, 1.0, 0.125, 0.75], &[1, 2, 3]).unwrap();
        let b = Tensor::from_vec(vec![1.0, 0.0, 0.5, 0.5, 0.25, 0.0], &[1, 2, 3]).unwrap();
        let mut bytes = Vec::new();
        write_dataset(&mut bytes, [(3, &a), (0, &b)]).unwrap();
        assert_eq!(&bytes[..8], b"MSMAE-DS");
        assert_eq!(bytes.len(), 8 + 4 * 5 + 2 * (4 + 6 * 4));
        let back = read_dataset(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].label, 3);
        assert_eq!(back[1].pixels.to_vec(), b.to_vec());
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let mut bytes = b"MSMAE-XX".to_vec();
        bytes.extend([0u8; 20]);
        assert!(matches!(read_dataset(&mut bytes.as_slice()), Err(Error::Format(_))));
        let mut bytes = b"MSMAE-DS".to_vec();
        bytes.extend(9u32.to_le_bytes());
        bytes.extend([0u8; 16]);
        assert!(matches!(read_dataset(&mut bytes.as_slice()), Err(Error::Format(_))));
    }
}
