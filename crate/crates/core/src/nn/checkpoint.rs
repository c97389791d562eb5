use std::path::Path;

use super::{Activation, MlpArchitecture, MlpNetwork};
use crate::error::{Error, Result};
use crate::io::{read_file, write_file, ByteReader, ByteWriter};

pub const NETWORK_MAGIC: &[u8; 4] = b"VLNN";
pub const NETWORK_VERSION: u32 = 1;

/// Little-endian layout: magic `VLNN`, `u32` version, `u8` activation (0 = tanh), `u32` input
/// dim, `u32` hidden layer count, one `u32` per hidden width, `u32` output dim, `u64` parameter
/// count, then the parameters as `f64` in layer-major order (`W_l` row-major, then `b_l`).
pub fn write_network(net: &MlpNetwork, w: &mut ByteWriter) {
    w.bytes(NETWORK_MAGIC);
    w.u32(NETWORK_VERSION);
    w.u8(match net.arch.activation {
        Activation::Tanh => 0,
    });
    w.u32(net.arch.input_dim as u32);
    w.u32(net.arch.hidden_dims.len() as u32);
    for &h in &net.arch.hidden_dims {
        w.u32(h as u32);
    }
    w.u32(net.arch.output_dim as u32);
    w.u64(net.param_count() as u64);
    w.f64s(&net.to_flat());
}

pub fn read_network(r: &mut ByteReader) -> Result<MlpNetwork> {
    r.header(NETWORK_MAGIC, NETWORK_VERSION)?;
    let activation = match r.u8()? {
        0 => Activation::Tanh,
        a => return Err(Error::format(format!("unknown activation code {a}"))),
    };
    let input_dim = r.u32()? as usize;
    let n_hidden = r.u32()? as usize;
    if n_hidden > 1024 {
        return Err(Error::format(format!("implausible hidden layer count {n_hidden}")));
    }
    let hidden_dims = (0..n_hidden).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let output_dim = r.u32()? as usize;
    let arch = MlpArchitecture {
        input_dim,
        hidden_dims,
        output_dim,
        activation,
    };
    arch.validate().map_err(|e| Error::format(e.to_string()))?;
    let count = r.usize()?;
    if count != arch.param_count() {
        return Err(Error::format(format!(
            "parameter count {count} does not match architecture ({})",
            arch.param_count()
        )));
    }
    let params = r.f64s(count)?;
    let net = MlpNetwork::from_flat(&arch, &params)?;
    if !net.is_finite() {
        return Err(Error::format("checkpoint contains non-finite parameters"));
    }
    Ok(net)
}

pub fn save_network(net: &MlpNetwork, path: &Path) -> Result<()> {
    let mut w = ByteWriter::new();
    write_network(net, &mut w);
    write_file(path, &w.finish())
}

pub fn load_network(path: &Path) -> Result<MlpNetwork> {
    let bytes = read_file(path)?;
    let mut r = ByteReader::new(&bytes);
    let net = read_network(&mut r)?;
    r.expect_end()?;
    Ok(net)
}
