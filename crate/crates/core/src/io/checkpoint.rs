use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Sanet, SanetConfig};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SANETCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    /// Seed the network was built with.
    pub seed: u64,
    /// Training iterations run before saving.
    pub iterations: usize,
}

/// Binary container, all integers little-endian:
///
/// ```text
/// "SANETCKP" u32 version
/// u64 len, config JSON
/// u64 len, metadata JSON
/// u32 tensor count
/// per tensor: u32 name len, name, u32 rank, u32 extents…, f32 data…
/// ```
pub fn encode_checkpoint<T: Scalar>(net: &Sanet<T>, iterations: usize) -> Result<Vec<u8>> {
    let config = serde_json::to_vec(net.config())?;
    let meta = serde_json::to_vec(&CheckpointMeta {
        seed: net.seed(),
        iterations,
    })?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for blob in [&config, &meta] {
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        out.extend_from_slice(blob);
    }
    let info = net.param_info();
    let tensors = net.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (pi, t) in info.iter().zip(tensors) {
        out.extend_from_slice(&(pi.name.len() as u32).to_le_bytes());
        out.extend_from_slice(pi.name.as_bytes());
        out.extend_from_slice(&(t.dims().len() as u32).to_le_bytes());
        for &d in t.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Corrupt(format!(
                "truncated while reading {what} at byte {} ({n} bytes needed, {} left)",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn blob(&mut self, what: &str) -> Result<&'a [u8]> {
        let n = self.u64(what)?;
        let n = usize::try_from(n).map_err(|_| Error::Corrupt(format!("{what} length {n}")))?;
        self.take(n, what)
    }
}

/// Rebuilds the network described by a checkpoint. Nothing is returned
/// unless every tensor is present, correctly shaped and fully read.
pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<(Sanet<T>, CheckpointMeta)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Corrupt("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let config: SanetConfig = serde_json::from_slice(r.blob("config")?)?;
    let meta: CheckpointMeta = serde_json::from_slice(r.blob("metadata")?)?;
    let mut net = Sanet::<T>::build(config, meta.seed)?;
    let info = net.param_info();
    let count = r.u32("tensor count")? as usize;
    if count != info.len() {
        return Err(Error::Corrupt(format!(
            "{count} tensors stored, config expects {}",
            info.len()
        )));
    }
    let mut seen = vec![false; info.len()];
    let mut tensors = net.tensors_mut();
    for _ in 0..count {
        let n = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(n, "name")?)
            .map_err(|_| Error::Corrupt("tensor name is not UTF-8".into()))?;
        let i = info
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| Error::Corrupt(format!("unknown tensor {name:?}")))?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::Corrupt(format!("tensor {name:?} stored twice")));
        }
        let rank = r.u32("rank")? as usize;
        let mut dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            dims.push(r.u32("extent")? as usize);
        }
        if dims != tensors[i].dims() {
            return Err(Error::Corrupt(format!(
                "tensor {name:?} has shape {dims:?}, config expects {:?}",
                tensors[i].dims()
            )));
        }
        let raw = r.take(4 * tensors[i].len(), name)?;
        for (v, b) in tensors[i].data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *v = T::of(f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes"))));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((net, meta))
}

pub fn save_checkpoint<T: Scalar>(net: &Sanet<T>, iterations: usize, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(net, iterations)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(Sanet<T>, CheckpointMeta)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Sanet32;

    fn trained_like() -> Sanet32 {
        let mut net = Sanet32::build(SanetConfig::tiny(), 3).unwrap();
        // Move away from the seeded initialisation so a rebuild cannot pass.
        for (i, t) in net.tensors_mut().into_iter().enumerate() {
            for (j, v) in t.data_mut().iter_mut().enumerate() {
                *v += ((i * 31 + j) % 17) as f32 * 1e-3;
            }
        }
        net
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let net = trained_like();
        let bytes = encode_checkpoint(&net, 42).unwrap();
        let (back, meta): (Sanet32, _) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(meta.iterations, 42);
        assert_eq!(back.config(), net.config());
        for (a, b) in net.tensors().iter().zip(back.tensors()) {
            let (a, b): (Vec<u32>, Vec<u32>) = (a.data().iter().map(|v| v.to_bits()).collect(), b.data().iter().map(|v| v.to_bits()).collect());
            assert_eq!(a, b);
        }
    }

    #[test]
    fn version_truncation_and_trailing_bytes() {
        let bytes = encode_checkpoint(&trained_like(), 0).unwrap();
        let mut bumped = bytes.clone();
        bumped[8] = 2;
        assert!(matches!(
            decode_checkpoint::<f32>(&bumped),
            Err(Error::VersionMismatch { found: 2, expected: 1 })
        ));
        let cut = &bytes[..bytes.len() - 10];
        assert!(matches!(decode_checkpoint::<f32>(cut), Err(Error::Corrupt(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_checkpoint::<f32>(&long), Err(Error::Corrupt(_))));
    }

    #[test]
    fn specialised_networks_round_trip() {
        let net = Sanet32::build(SanetConfig { num_domains: 3, ..SanetConfig::tiny() }, 1).unwrap().specialize(9);
        let (back, _): (Sanet32, _) = decode_checkpoint(&encode_checkpoint(&net, 0).unwrap()).unwrap();
        assert_eq!(back, net);
    }
}
