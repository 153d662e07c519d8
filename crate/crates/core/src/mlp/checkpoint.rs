//! Versioned binary checkpoint format.
//!
//! Layout: magic `RGSCOPE1` (8 bytes), activation tag (u8), layer count
//! (u32 LE), layer sizes (u32 LE each), parameter count (u64 LE),
//! parameters (f64 LE each).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::net::{Activation, MlpArch, NetworkParameters};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RGSCOPE1";

pub fn save_checkpoint(params: &NetworkParameters, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    let tag: u8 = match params.arch().activation() {
        Activation::Tanh => 0,
    };
    w.write_all(&[tag])?;
    let sizes = params.arch().layer_sizes();
    w.write_all(&(sizes.len() as u32).to_le_bytes())?;
    for &n in sizes {
        w.write_all(&(n as u32).to_le_bytes())?;
    }
    w.write_all(&(params.theta().len() as u64).to_le_bytes())?;
    for &t in params.theta() {
        w.write_all(&t.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkParameters> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad checkpoint magic {:?} in {}",
            String::from_utf8_lossy(&magic),
            path.display()
        )));
    }
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let activation = match tag[0] {
        0 => Activation::Tanh,
        t => return Err(Error::Format(format!("unknown activation tag {t}"))),
    };
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let n_sizes = u32::from_le_bytes(u32buf) as usize;
    if n_sizes < 2 || n_sizes > 1024 {
        return Err(Error::Format(format!("implausible layer count {n_sizes}")));
    }
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        r.read_exact(&mut u32buf)?;
        sizes.push(u32::from_le_bytes(u32buf) as usize);
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let n_theta = u64::from_le_bytes(u64buf) as usize;
    let arch = MlpArch::with_activation(sizes, activation)?;
    if n_theta != arch.param_count() {
        return Err(Error::Format(format!(
            "parameter count {n_theta} does not match architecture ({})",
            arch.param_count()
        )));
    }
    let mut theta = Vec::with_capacity(n_theta);
    let mut f64buf = [0u8; 8];
    for _ in 0..n_theta {
        r.read_exact(&mut f64buf)?;
        theta.push(f64::from_le_bytes(f64buf));
    }
    NetworkParameters::new(arch, theta)
}
