//! Parameter checkpoint container. Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "ANSGCKPT"
//! version    u32      1
//! dtype      u8       0 = f32, 1 = f64
//! in_ch      u32
//! classes    u32
//! stacks     u32      followed by (convs u32, width u32) per stack
//! arrays     u32      followed by, per array:
//!   name_len u16, name (UTF-8), ndim u8, dims u32 × ndim,
//!   values   dtype × prod(dims), little-endian IEEE-754
//! ```
//!
//! Arrays appear in [`Fcn8sParams::named_arrays`] order. Conv kernels are
//! 4-d `(out, in, k, k)`, biases 1-d.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::net::{Fcn8sParams, NetworkConfig, StackConfig};
use super::tensor::Real;

pub const MAGIC: &[u8; 8] = b"ANSGCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    F64 = 1,
}

impl DType {
    fn of<T: Real>() -> DType {
        if std::mem::size_of::<T>() == 4 {
            DType::F32
        } else {
            DType::F64
        }
    }
}

fn dims_of<T: Real>(params: &Fcn8sParams<T>) -> Vec<Vec<u32>> {
    params
        .layers()
        .iter()
        .flat_map(|c| {
            [
                vec![c.out_ch as u32, c.in_ch as u32, c.k as u32, c.k as u32],
                vec![c.out_ch as u32],
            ]
        })
        .collect()
}

pub fn write_checkpoint<T: Real, W: Write>(params: &Fcn8sParams<T>, mut out: W) -> std::io::Result<()> {
    let cfg = &params.config;
    let dtype = DType::of::<T>();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&[dtype as u8])?;
    out.write_all(&(cfg.in_channels as u32).to_le_bytes())?;
    out.write_all(&(cfg.num_classes as u32).to_le_bytes())?;
    out.write_all(&(cfg.stacks.len() as u32).to_le_bytes())?;
    for s in &cfg.stacks {
        out.write_all(&(s.convs as u32).to_le_bytes())?;
        out.write_all(&(s.width as u32).to_le_bytes())?;
    }
    let arrays = params.named_arrays();
    out.write_all(&(arrays.len() as u32).to_le_bytes())?;
    for ((name, values), dims) in arrays.iter().zip(dims_of(params)) {
        out.write_all(&(name.len() as u16).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&[dims.len() as u8])?;
        for d in &dims {
            out.write_all(&d.to_le_bytes())?;
        }
        for &v in values.iter() {
            match dtype {
                DType::F32 => out.write_all(&(v.as_f64() as f32).to_le_bytes())?,
                DType::F64 => out.write_all(&v.as_f64().to_le_bytes())?,
            }
        }
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| Error::Checkpoint(format!("truncated: {e}")))?;
        Ok(b)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
}

/// Read a checkpoint into parameters of element type `T` (values are
/// converted if the stored dtype differs).
pub fn read_checkpoint<T: Real, R: Read>(input: R) -> Result<Fcn8sParams<T>> {
    let mut r = Reader { inner: input };
    if &r.bytes::<8>()? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dtype = match r.u8()? {
        0 => DType::F32,
        1 => DType::F64,
        t => return Err(Error::Checkpoint(format!("unknown dtype tag {t}"))),
    };
    let in_channels = r.u32()? as usize;
    let num_classes = r.u32()? as usize;
    let n_stacks = r.u32()? as usize;
    if n_stacks > 64 {
        return Err(Error::Checkpoint(format!("implausible stack count {n_stacks}")));
    }
    let mut stacks = Vec::with_capacity(n_stacks);
    for _ in 0..n_stacks {
        let convs = r.u32()? as usize;
        let width = r.u32()? as usize;
        stacks.push(StackConfig { convs, width });
    }
    let config = NetworkConfig {
        in_channels,
        stacks,
        num_classes,
    };
    config
        .validate()
        .map_err(|e| Error::Checkpoint(format!("stored config invalid: {e}")))?;
    let mut params = Fcn8sParams::<T>::zeros(&config)?;
    let expected: Vec<(String, Vec<u32>)> = params
        .named_arrays()
        .into_iter()
        .map(|(n, _)| n)
        .zip(dims_of(&params))
        .collect();
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} arrays, found {count}",
            expected.len()
        )));
    }
    for ((name, dims), dst) in expected.iter().zip(params.arrays_mut()) {
        let len = r.u16()? as usize;
        let mut buf = vec![0u8; len];
        r.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Checkpoint(format!("truncated: {e}")))?;
        let got = String::from_utf8(buf).map_err(|_| Error::Checkpoint("array name not UTF-8".into()))?;
        if &got != name {
            return Err(Error::Checkpoint(format!("expected array {name}, found {got}")));
        }
        let ndim = r.u8()? as usize;
        let got_dims = (0..ndim).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        if &got_dims != dims {
            return Err(Error::Checkpoint(format!(
                "{name}: dims {got_dims:?}, expected {dims:?}"
            )));
        }
        for v in dst.iter_mut() {
            *v = match dtype {
                DType::F32 => T::from_f64(f32::from_le_bytes(r.bytes()?) as f64),
                DType::F64 => T::from_f64(f64::from_le_bytes(r.bytes()?)),
            };
        }
    }
    Ok(params)
}

pub fn save_checkpoint<T: Real>(params: &Fcn8sParams<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(params, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<Fcn8sParams<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> NetworkConfig {
        NetworkConfig::with_widths(&[2, 3, 2, 4, 2], 1)
    }

    #[test]
    fn roundtrip_preserves_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = Fcn8sParams::<f64>::init(&tiny(), &mut rng).unwrap();
        p.score4.bias[1] = 0.25;
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        let back: Fcn8sParams<f64> = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, p);

        let p32: Fcn8sParams<f32> = p.cast();
        let mut buf32 = Vec::new();
        write_checkpoint(&p32, &mut buf32).unwrap();
        assert_eq!(buf32[12], DType::F32 as u8);
        let back: Fcn8sParams<f32> = read_checkpoint(buf32.as_slice()).unwrap();
        assert_eq!(back, p32);
    }

    #[test]
    fn rejects_corruption() {
        let p = Fcn8sParams::<f32>::zeros(&tiny()).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        assert!(read_checkpoint::<f32, _>(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint::<f32, _>(bad.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(read_checkpoint::<f32, _>(bad.as_slice()).is_err());
    }

    #[test]
    fn header_layout_is_little_endian() {
        let p = Fcn8sParams::<f32>::zeros(&tiny()).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(&buf[8..12], &[1, 0, 0, 0]);
        assert_eq!(&buf[13..17], &[3, 0, 0, 0]); // in_channels
        assert_eq!(&buf[17..21], &[2, 0, 0, 0]); // classes
        assert_eq!(&buf[21..25], &[5, 0, 0, 0]); // stacks
    }
}
