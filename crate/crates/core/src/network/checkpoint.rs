use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DgmConfig, DgmNetwork, ParamVector};
use crate::error::{Error, Result};

pub const LAYOUT_VERSION: u32 = 1;

/// First line of a checkpoint file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub d: usize,
    #[serde(rename = "L")]
    pub layers: usize,
    pub n_hid: usize,
    pub layout_version: u32,
}

impl CheckpointHeader {
    pub fn config(&self) -> DgmConfig {
        DgmConfig { d: self.d, layers: self.layers, hidden: self.n_hid }
    }
}

/// A decoded checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub network: DgmNetwork,
}

/// Writes `{d, L, n_hid, layout_version}` as one JSON line, then the
/// parameters as little-endian `f64`.
pub fn write_checkpoint(path: &Path, net: &DgmNetwork) -> Result<()> {
    let header = CheckpointHeader {
        d: net.config.d,
        layers: net.config.layers,
        n_hid: net.config.hidden,
        layout_version: LAYOUT_VERSION,
    };
    let mut buf = serde_json::to_vec(&header)?;
    buf.push(b'\n');
    buf.reserve(8 * net.theta.len());
    for v in net.theta.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    f.sync_all()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Checkpoint("missing header line".into()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&line[..line.len() - 1])
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.layout_version != LAYOUT_VERSION {
        return Err(Error::Checkpoint(format!(
            "layout version {} is not supported (expected {LAYOUT_VERSION})",
            header.layout_version
        )));
    }
    let config = header.config();
    config.validate()?;
    let mut body = Vec::new();
    reader.read_to_end(&mut body)?;
    let expected = 8 * config.param_count();
    if body.len() != expected {
        return Err(Error::Checkpoint(format!("expected {expected} parameter bytes, found {}", body.len())));
    }
    let theta = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let network = DgmNetwork::new(config, ParamVector(theta))?;
    Ok(Checkpoint { header, network })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join(format!("pide-ckpt-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("a.ckpt");
        let mut net = DgmNetwork::initialized(DgmConfig::new(3, 2, 7).unwrap(), 5).unwrap();
        net.theta[0] = f64::MIN_POSITIVE;
        net.theta[1] = -0.0;
        write_checkpoint(&path, &net).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back.header, CheckpointHeader { d: 3, layers: 2, n_hid: 7, layout_version: 1 });
        for (a, b) in back.network.theta.iter().zip(net.theta.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }

        let raw = fs::read(&path).unwrap();
        let first = raw.iter().position(|&b| b == b'\n').unwrap();
        let header: serde_json::Value = serde_json::from_slice(&raw[..first]).unwrap();
        assert_eq!(header["L"], 2);
        assert_eq!(header["n_hid"], 7);

        fs::write(&path, &raw[..raw.len() - 3]).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Checkpoint(_))));
        fs::remove_dir_all(&dir).unwrap();
    }
}
