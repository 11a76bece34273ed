//! Binary checkpoint format. All integers and reals are little-endian.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "WEIN"
//! 4       4     format version (u32, currently 1)
//! 8       16    stage widths (4 × u32)
//! 24      4     side depth (u32)
//! 28      4     input channels (u32)
//! 32      8     RNG seed used for init and shuffling (u64)
//! 40      4     completed epochs (u32)
//! 44      1     optimizer state present (u8, 0 or 1)
//! 45      8     parameter count P (u64)
//! 53      4·P   parameters (f32)
//! ...     4·P   momentum buffers (f32), only if the flag is 1
//! ```
//!
//! Parameters are laid out kernel by kernel in the order backbone
//! conv1_1..conv4_3, side branches in the same order, collapse convs for
//! stages 1..4, then fusion; within a kernel, all weights
//! (`[out, in, kh, kw]` row-major) precede the biases.

use std::path::Path;

use crate::error::{Error, Result};

use super::config::NetworkConfig;
use super::params::ModelParams;

pub const MAGIC: &[u8; 4] = b"WEIN";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 53;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub seed: u64,
    pub epochs_completed: u32,
    pub params: ModelParams<f32>,
    /// SGD momentum buffers, stored with the same layout as `params`.
    pub velocity: Option<ModelParams<f32>>,
}

fn flatten(params: &ModelParams<f32>, out: &mut Vec<u8>) {
    for k in params.kernels() {
        for v in k.weight.iter().chain(&k.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn unflatten(config: &NetworkConfig, bytes: &[u8]) -> Result<ModelParams<f32>> {
    let mut params = ModelParams::<f32>::zeros(config)?;
    let mut chunks = bytes.chunks_exact(4);
    for k in params.kernels_mut() {
        for v in k.weight.iter_mut().chain(k.bias.iter_mut()) {
            let c = chunks
                .next()
                .ok_or_else(|| Error::Checkpoint("parameter block truncated".into()))?;
            *v = f32::from_le_bytes(c.try_into().expect("4-byte chunk"));
        }
    }
    Ok(params)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "unexpected end of data at byte {} (need {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let count = self.params.param_count();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * count);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for w in self.config.stage_widths {
            out.extend_from_slice(&(w as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.config.side_depth as u32).to_le_bytes());
        out.extend_from_slice(&(self.config.input_channels as u32).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.epochs_completed.to_le_bytes());
        out.push(self.velocity.is_some() as u8);
        out.extend_from_slice(&(count as u64).to_le_bytes());
        flatten(&self.params, &mut out);
        if let Some(v) = &self.velocity {
            flatten(v, &mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic, expected \"WEIN\"".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let mut stage_widths = [0usize; 4];
        for w in stage_widths.iter_mut() {
            *w = r.u32()? as usize;
        }
        let config = NetworkConfig {
            stage_widths,
            side_depth: r.u32()? as usize,
            input_channels: r.u32()? as usize,
        };
        config.validate()?;
        let seed = r.u64()?;
        let epochs_completed = r.u32()?;
        let has_velocity = match r.take(1)?[0] {
            0 => false,
            1 => true,
            other => return Err(Error::Checkpoint(format!("bad optimizer flag {other}"))),
        };
        let count = r.u64()? as usize;
        if count != config.param_count() {
            return Err(Error::Checkpoint(format!(
                "parameter count {count} does not match config ({})",
                config.param_count()
            )));
        }
        let params = unflatten(&config, r.take(4 * count)?)?;
        let velocity = if has_velocity {
            Some(unflatten(&config, r.take(4 * count)?)?)
        } else {
            None
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint {
            config,
            seed,
            epochs_completed,
            params,
            velocity,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    fn sample() -> Checkpoint {
        let config = NetworkConfig::desk();
        let params = init_params::<f32>(&config, 11).unwrap();
        let velocity = init_params::<f32>(&config, 12).unwrap();
        Checkpoint {
            config,
            seed: 11,
            epochs_completed: 3,
            params,
            velocity: Some(velocity),
        }
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let bytes = c.to_bytes();
        assert_eq!(&bytes[..4], b"WEIN");
        assert_eq!(bytes.len(), HEADER_LEN + 8 * c.config.param_count());
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), c);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).is_err());
        let mut ver = bytes;
        ver[4] = 9;
        assert!(Checkpoint::from_bytes(&ver).is_err());
    }
}
