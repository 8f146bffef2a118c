//! Binary model container.
//!
//! ```text
//! magic    8 bytes  "NINNSYS\0"
//! version  u32
//! state_dim u64, n_nets u64
//! per net: input_dim u64, output_dim u64, width u64, depth u64, tau f64, epsilon f64,
//!          stencil (input_dim × u64), parameters (flat order, f64)
//! sha256 of all preceding bytes (32 bytes)
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::activation::ActivationSpec;
use super::resnet::{ResNetParams, ResNetShape};
use super::system::ResNetSystem;
use crate::error::{NinnError, Result};

pub const MAGIC: &[u8; 8] = b"NINNSYS\0";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

pub fn encode_system(system: &ResNetSystem) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_u64(&mut buf, system.state_dim() as u64);
    put_u64(&mut buf, system.nets().len() as u64);
    for (net, stencil) in system.nets().iter().zip(system.stencils()) {
        put_u64(&mut buf, net.input_dim() as u64);
        put_u64(&mut buf, net.output_dim() as u64);
        put_u64(&mut buf, net.width() as u64);
        put_u64(&mut buf, net.depth() as u64);
        buf.extend_from_slice(&net.tau().to_le_bytes());
        buf.extend_from_slice(&net.activation().epsilon().to_le_bytes());
        for &s in stencil {
            put_u64(&mut buf, s as u64);
        }
        for v in net.to_flat() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

pub fn decode_system(bytes: &[u8]) -> Result<ResNetSystem> {
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(NinnError::CorruptFile("missing magic header".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(NinnError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < 12 + DIGEST_LEN {
        return Err(NinnError::CorruptFile("file truncated".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(NinnError::CorruptFile("checksum mismatch".into()));
    }

    let mut r = Reader { buf: body, pos: 12 };
    let state_dim = r.usize()?;
    let n_nets = r.usize()?;
    if n_nets != state_dim {
        return Err(NinnError::DimensionMismatch(format!(
            "file holds {n_nets} nets for state dimension {state_dim}"
        )));
    }
    let mut nets = Vec::with_capacity(n_nets);
    let mut stencils = Vec::with_capacity(n_nets);
    for _ in 0..n_nets {
        let input_dim = r.usize()?;
        let output_dim = r.usize()?;
        let width = r.usize()?;
        let depth = r.usize()?;
        let tau = r.f64()?;
        let epsilon = r.f64()?;
        let activation =
            ActivationSpec::new(epsilon).map_err(|e| NinnError::CorruptFile(e.to_string()))?;
        let shape = ResNetShape {
            input_dim,
            output_dim,
            width,
            depth,
            tau,
            activation,
        };
        shape
            .validate()
            .map_err(|e| NinnError::DimensionMismatch(e.to_string()))?;
        let stencil = (0..input_dim)
            .map(|_| r.usize())
            .collect::<Result<Vec<_>>>()?;
        let n_params = shape.num_params();
        if n_params > r.remaining() / 8 {
            return Err(NinnError::DimensionMismatch(
                "declared dimensions exceed file contents".into(),
            ));
        }
        let flat = (0..n_params).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let mut net = ResNetParams::zeros(&shape)?;
        net.set_flat(&flat)?;
        nets.push(net);
        stencils.push(stencil);
    }
    if r.remaining() != 0 {
        return Err(NinnError::DimensionMismatch(
            "trailing bytes after last net".into(),
        ));
    }
    ResNetSystem::new(nets, stencils, state_dim)
}

pub fn save_model(system: &ResNetSystem, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_system(system))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ResNetSystem> {
    decode_system(&fs::read(path)?)
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take8(&mut self) -> Result<[u8; 8]> {
        let end = self.pos + 8;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| NinnError::CorruptFile("unexpected end of data".into()))?;
        self.pos = end;
        Ok(bytes.try_into().unwrap())
    }

    fn usize(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take8()?);
        usize::try_from(v).map_err(|_| NinnError::CorruptFile(format!("size {v} out of range")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take8()?))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::system::lorenz96_stencils;
    use crate::rng::seeded_rng;

    fn sample_system() -> ResNetSystem {
        let mut rng = seeded_rng(5);
        let shape = ResNetShape::new(4, 1, 5, 4)
            .with_tau(0.37)
            .with_activation(ActivationSpec::new(0.05).unwrap());
        let nets = (0..6)
            .map(|_| ResNetParams::random_uniform(&shape, 1.0, &mut rng).unwrap())
            .collect();
        ResNetSystem::new(nets, lorenz96_stencils(6), 6).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let sys = sample_system();
        let bytes = encode_system(&sys);
        let back = decode_system(&bytes).unwrap();
        assert_eq!(back, sys);
        assert_eq!(encode_system(&back), bytes);
        let u = [0.1, -0.4, 2.0, 1.5, -3.0, 0.7];
        let a = sys.forward(&u).unwrap();
        let b = back.forward(&u).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn truncated_is_corrupt() {
        let bytes = encode_system(&sample_system());
        for cut in [5, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                decode_system(&bytes[..cut]),
                Err(NinnError::CorruptFile(_))
            ));
        }
    }

    #[test]
    fn flipped_byte_is_corrupt() {
        let mut bytes = encode_system(&sample_system());
        let i = bytes.len() / 2;
        bytes[i] ^= 0x40;
        assert!(matches!(
            decode_system(&bytes),
            Err(NinnError::CorruptFile(_))
        ));
    }

    #[test]
    fn wrong_version_is_reported() {
        let mut bytes = encode_system(&sample_system());
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            decode_system(&bytes),
            Err(NinnError::VersionMismatch { found: 7, .. })
        ));
    }

    #[test]
    fn inconsistent_dimensions_are_reported() {
        let bytes = encode_system(&sample_system());
        let mut body = bytes[..bytes.len() - DIGEST_LEN].to_vec();
        // state_dim 6 -> 7 while still holding 6 nets
        body[12..20].copy_from_slice(&7u64.to_le_bytes());
        let digest = Sha256::digest(&body);
        body.extend_from_slice(&digest);
        assert!(matches!(
            decode_system(&body),
            Err(NinnError::DimensionMismatch(_))
        ));
    }
}
