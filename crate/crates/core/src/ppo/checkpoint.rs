//! Binary checkpoint: magic, format version, input width, layer widths,
//! parameter count, then the parameters as little-endian `f64`.

use std::io::{Read, Write};
use std::path::Path;

use super::net::{ActorCritic, ACTION_DIM};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"WHOPPPO\0";
pub const VERSION: u32 = 1;

pub fn to_bytes(net: &ActorCritic) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * net.params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(net.input_dim as u32).to_le_bytes());
    let hidden = &net.policy.sizes[1..net.policy.sizes.len() - 1];
    out.extend_from_slice(&(hidden.len() as u32).to_le_bytes());
    for &h in hidden {
        out.extend_from_slice(&(h as u32).to_le_bytes());
    }
    out.extend_from_slice(&(net.params.len() as u64).to_le_bytes());
    for p in &net.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.buf.len() < N {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let (head, rest) = self.buf.split_at(N);
        self.buf = rest;
        Ok(head.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<ActorCritic> {
    let mut r = Reader { buf: bytes };
    if &r.take::<8>()? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let input_dim = r.u32()? as usize;
    let n_hidden = r.u32()? as usize;
    if n_hidden > 16 {
        return Err(Error::Checkpoint("implausible layer count".into()));
    }
    let hidden = (0..n_hidden).map(|_| r.u32().map(|h| h as usize)).collect::<Result<Vec<_>>>()?;
    let mut net = ActorCritic::zeros(input_dim, &hidden);
    let count = u64::from_le_bytes(r.take()?) as usize;
    if count != net.params.len() {
        return Err(Error::Checkpoint(format!(
            "parameter count {count} does not match layout ({})",
            net.params.len()
        )));
    }
    for p in net.params.iter_mut() {
        *p = f64::from_le_bytes(r.take()?);
    }
    if !r.buf.is_empty() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    debug_assert_eq!(net.policy.sizes.last(), Some(&ACTION_DIM));
    Ok(net)
}

pub fn save(net: &ActorCritic, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&to_bytes(net))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ActorCritic> {
    let mut f = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingCheckpoint(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}
