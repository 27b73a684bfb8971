//! Flat named-tensor container.
//!
//! Layout: the 6-byte magic `JESSI1`, then entries until end of file. Each
//! entry is a `u32` name length, the UTF-8 name, a `u32` rank, `rank` `u32`
//! extents and the row-major values as `f32`. All integers and reals are
//! little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"JESSI1";

pub fn write_to<W: Write>(mut w: W, entries: &[(String, Tensor)]) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    for (name, t) in entries {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &e in t.shape() {
            w.write_all(&(e as u32).to_le_bytes())?;
        }
        for &v in t.data() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| Error::Checkpoint(format!("truncated entry: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_from<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("missing header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut entries = Vec::new();
    loop {
        let mut len = [0u8; 4];
        match r.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(Error::Checkpoint(e.to_string())),
        }
        let mut name = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut name)
            .map_err(|_| Error::Checkpoint("truncated name".into()))?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let shape = (0..rank)
            .map(|_| read_u32(&mut r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw)
            .map_err(|_| Error::Checkpoint(format!("truncated data for {name}")))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        entries.push((name, Tensor::new(shape, data)?));
    }
    Ok(entries)
}

pub fn save(path: &Path, entries: &[(String, Tensor)]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_to(BufWriter::new(f), entries).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_from(BufReader::new(f))
}

/// Encodes bytes as a rank-1 tensor of exact small integers.
pub fn bytes_to_tensor(bytes: &[u8]) -> Tensor {
    Tensor::vector(bytes.iter().map(|&b| b as f64).collect())
}

pub fn tensor_to_bytes(t: &Tensor) -> Result<Vec<u8>> {
    t.data()
        .iter()
        .map(|&v| {
            if (0.0..=255.0).contains(&v) && v.fract() == 0.0 {
                Ok(v as u8)
            } else {
                Err(Error::Checkpoint("byte record holds a non-byte value".into()))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_exact() {
        let t = Tensor::new(vec![1, 2], vec![1.0, -2.0]).unwrap();
        let mut buf = Vec::new();
        write_to(&mut buf, &[("w".into(), t)]).unwrap();
        let mut want = b"JESSI1".to_vec();
        want.extend(1u32.to_le_bytes());
        want.extend(b"w");
        want.extend(2u32.to_le_bytes());
        want.extend(1u32.to_le_bytes());
        want.extend(2u32.to_le_bytes());
        want.extend(1.0f32.to_le_bytes());
        want.extend((-2.0f32).to_le_bytes());
        assert_eq!(buf, want);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(read_from(&b"JESSI2"[..]).is_err());
        let mut buf = Vec::new();
        write_to(&mut buf, &[("w".into(), Tensor::vector(vec![1.0, 2.0]))]).unwrap();
        buf.pop();
        assert!(read_from(&buf[..]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            name in "[a-z_.]{1,12}",
            vals in proptest::collection::vec(-1e6f32..1e6, 0..24),
        ) {
            let data: Vec<f64> = vals.iter().map(|&v| v as f64).collect();
            let t = Tensor::new(vec![data.len()], data).unwrap();
            let mut buf = Vec::new();
            write_to(&mut buf, &[(name.clone(), t.clone())]).unwrap();
            let back = read_from(&buf[..]).unwrap();
            prop_assert_eq!(&back, &vec![(name.clone(), t)]);
            let mut again = Vec::new();
            write_to(&mut again, &back).unwrap();
            prop_assert_eq!(buf, again);
        }
    }
}
