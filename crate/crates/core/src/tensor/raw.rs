//! Raw tensor exchange format: the 4-byte magic `GWT1`, then `n, c, h, w`
//! as little-endian `u32`, then `n*c*h*w` little-endian `f32` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Shape, Tensor};
use crate::error::{Error, Result};

pub const RAW_MAGIC: &[u8; 4] = b"GWT1";

pub fn write_raw<W: Write>(mut out: W, tensor: &Tensor) -> Result<()> {
    out.write_all(RAW_MAGIC)?;
    for d in tensor.shape().dims() {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
        out.write_all(&d.to_le_bytes())?;
    }
    let mut bytes = Vec::with_capacity(tensor.len() * 4);
    for v in tensor.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&bytes)?;
    Ok(())
}

pub fn read_raw<R: Read>(mut input: R) -> Result<Tensor> {
    let mut header = [0u8; 20];
    input
        .read_exact(&mut header)
        .map_err(|e| Error::Format(format!("truncated raw tensor header: {e}")))?;
    if &header[..4] != RAW_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &header[..4])));
    }
    let dim = |i: usize| u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let shape = Shape::new(dim(0), dim(1), dim(2), dim(3));
    shape.validate()?;
    let len = shape
        .n
        .checked_mul(shape.c)
        .and_then(|v| v.checked_mul(shape.h))
        .and_then(|v| v.checked_mul(shape.w))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::Format(format!("shape {shape} too large")))?;
    let mut bytes = vec![0u8; len];
    input
        .read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("truncated raw tensor body for shape {shape}: {e}")))?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(shape, data)
}

pub fn save_raw(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_raw(&mut out, tensor)?;
    out.flush()?;
    Ok(())
}

pub fn load_raw(path: impl AsRef<Path>) -> Result<Tensor> {
    read_raw(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(Shape::new(1, 1, 1, 2), vec![1.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        write_raw(&mut buf, &t).unwrap();
        assert_eq!(&buf[..4], b"GWT1");
        assert_eq!(&buf[4..20], &[1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&buf[20..24], &1.0f32.to_le_bytes());
        assert_eq!(buf.len(), 28);
    }

    #[test]
    fn truncated_and_bad_magic_fail() {
        let t = Tensor::new(Shape::new(1, 1, 2, 2), vec![1.0; 4]).unwrap();
        let mut buf = Vec::new();
        write_raw(&mut buf, &t).unwrap();
        assert!(read_raw(&buf[..buf.len() - 1]).is_err());
        assert!(read_raw(&buf[..10]).is_err());
        buf[0] = b'X';
        assert!(read_raw(&buf[..]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(n in 1usize..3, c in 1usize..3, h in 1usize..5, w in 1usize..5, seed in any::<u64>()) {
            let mut rng = crate::tensor::Rng::new(seed);
            let shape = Shape::new(n, c, h, w);
            let t = crate::tensor::random_fill(&mut rng, shape, crate::tensor::Init::Uniform { lo: -5.0, hi: 5.0 }).unwrap();
            let mut buf = Vec::new();
            write_raw(&mut buf, &t).unwrap();
            prop_assert_eq!(read_raw(&buf[..]).unwrap(), t);
        }
    }
}
