//! Binary checkpoint format (all integers little-endian):
//!
//! ```text
//! "CLL1"  u16 version
//! u32 channels, num_blocks, kernel_size, in_channels, out_channels
//! u8 provider kind (0 plain, 1 ftn, 2 adafm)  u32 groups  u32 depth  u8 exclude_last
//! u32 entry count
//! per entry: u32 name length, UTF-8 name, u32 dims[4], f32 payload
//! ```

use std::fs;
use std::path::Path;

use crate::error::{CheckpointError, Error, Result};
use crate::ftn::FtnConfig;
use crate::model::{build_network, Network, NetworkSpec, ProviderConfig, ProviderKind};
use crate::store::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"CLL1";
pub const VERSION: u16 = 1;

/// A network's architecture, provider layout and parameters.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub providers: ProviderConfig,
    pub store: ParamStore<f32>,
}

impl Checkpoint {
    pub fn from_network(net: &Network<f32>) -> Self {
        Checkpoint {
            spec: net.spec(),
            providers: net.provider_config(),
            store: net.store(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 4 * self.store.numel());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let s = &self.spec;
        for v in [s.channels, s.num_blocks, s.kernel_size, s.in_channels, s.out_channels] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        let (kind, ftn) = match self.providers.kind {
            ProviderKind::Plain => (0u8, FtnConfig::default()),
            ProviderKind::Ftn(c) => (1, c),
            ProviderKind::AdaFm => (2, FtnConfig::default()),
        };
        out.push(kind);
        out.extend_from_slice(&(ftn.groups as u32).to_le_bytes());
        out.extend_from_slice(&(ftn.depth as u32).to_le_bytes());
        out.push(self.providers.exclude_last as u8);
        out.extend_from_slice(&(self.store.len() as u32).to_le_bytes());
        for (name, t) in self.store.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            for d in t.dims().as_array() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Structural decode. Does not check the entries against the spec; see
    /// [`Checkpoint::validate`].
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic(magic));
        }
        let version = u16::from_le_bytes(r.take(2, "version")?.try_into().expect("2 bytes"));
        if version != VERSION {
            return Err(CheckpointError::Version { found: version, supported: VERSION });
        }
        let spec = NetworkSpec {
            channels: r.u32("network spec")? as usize,
            num_blocks: r.u32("network spec")? as usize,
            kernel_size: r.u32("network spec")? as usize,
            in_channels: r.u32("network spec")? as usize,
            out_channels: r.u32("network spec")? as usize,
        };
        let kind = r.take(1, "provider config")?[0];
        let ftn = FtnConfig {
            groups: r.u32("provider config")? as usize,
            depth: r.u32("provider config")? as usize,
        };
        let exclude_last = match r.take(1, "provider config")?[0] {
            0 => false,
            1 => true,
            b => return Err(CheckpointError::Malformed(format!("exclude_last flag {b}"))),
        };
        let kind = match kind {
            0 => ProviderKind::Plain,
            1 => ProviderKind::Ftn(ftn),
            2 => ProviderKind::AdaFm,
            k => return Err(CheckpointError::Malformed(format!("provider kind {k}"))),
        };
        let count = r.u32("entry count")?;
        let mut store = ParamStore::new();
        for i in 0..count {
            let what = format!("name of entry {i}");
            let len = r.u32(&what)? as usize;
            let name = std::str::from_utf8(r.take(len, &what)?)
                .map_err(|_| CheckpointError::Malformed(format!("entry {i}: name is not UTF-8")))?
                .to_string();
            let what = format!("parameter {name}");
            let mut dims = [0usize; 4];
            for d in &mut dims {
                *d = r.u32(&what)? as usize;
            }
            let numel = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|n| n.checked_mul(4).is_some())
                .ok_or_else(|| CheckpointError::Malformed(format!("{what}: dims overflow")))?;
            let payload = r.take(numel * 4, &what)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let t = Tensor::new(dims, data).expect("length follows dims");
            store
                .insert(name, t)
                .map_err(|_| CheckpointError::Malformed(format!("duplicate {what}")))?;
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Malformed(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            spec,
            providers: ProviderConfig { kind, exclude_last },
            store,
        })
    }

    /// Rebuild the network and check every entry against it.
    pub fn to_network(&self) -> Result<Network<f32>> {
        let mut net: Network<f32> = build_network(self.spec, 0)
            .map_err(|e| CheckpointError::Malformed(format!("network spec: {e}")))?;
        net.attach_providers(self.providers)
            .map_err(|e| CheckpointError::Malformed(format!("provider config: {e}")))?;
        for (name, _, t) in net.named_params() {
            let Some(stored) = self.store.get(&name) else {
                return Err(CheckpointError::Malformed(format!("missing parameter {name}")).into());
            };
            if stored.dims() != t.dims() {
                return Err(CheckpointError::DimMismatch {
                    name,
                    stored: to_u32(stored.dims().as_array()),
                    expected: to_u32(t.dims().as_array()),
                }
                .into());
            }
        }
        if self.store.len() != net.named_params().len() {
            let extra = self
                .store
                .names()
                .find(|n| net.named_params().iter().all(|(m, _, _)| m != n))
                .unwrap_or("?")
                .to_string();
            return Err(CheckpointError::Malformed(format!("unexpected parameter {extra}")).into());
        }
        net.load_store(&self.store)?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        self.to_network().map(|_| ())
    }
}

fn to_u32(a: [usize; 4]) -> [u32; 4] {
    a.map(|v| v as u32)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(CheckpointError::Truncated(what.to_string()));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, checkpoint.to_bytes()).map_err(Error::from)
}

/// Read, decode and validate against the stored spec.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let ck = Checkpoint::from_bytes(&bytes)?;
    ck.validate()?;
    Ok(ck)
}

impl Network<f32> {
    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self> {
        checkpoint.to_network()
    }
}
