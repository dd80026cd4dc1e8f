//! Checkpoint container: `u32` LE entry count, then per entry a `u16` LE
//! name length, the UTF-8 name and an embedded FTNS tensor. A text sidecar
//! `<file>.txt` records the unroll depth, filter count and modes.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::autodiff::Parameter;
use crate::error::{format_err, Result};
use crate::ftns::{decode, encode};
use crate::weights::WeightMode;

use super::{FistaNetConfig, SignMode};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub config: FistaNetConfig,
    pub weight_mode: WeightMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: Vec<Parameter>,
    pub meta: CheckpointMeta,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

fn meta_text(meta: &CheckpointMeta) -> String {
    format!(
        "n_layers={}\nn_filters={}\nsign_mode={}\nweight_mode={}\n",
        meta.config.n_layers,
        meta.config.n_filters,
        meta.config.sign_mode,
        match meta.weight_mode {
            WeightMode::Analytic => "analytic",
            WeightMode::Physical => "physical",
        }
    )
}

fn parse_meta(text: &str) -> Result<CheckpointMeta> {
    let mut n_layers = None;
    let mut n_filters = None;
    let mut sign_mode = None;
    let mut weight_mode = None;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format_err(format!("bad sidecar line `{line}`")))?;
        match k {
            "n_layers" => n_layers = v.parse().ok(),
            "n_filters" => n_filters = v.parse().ok(),
            "sign_mode" => sign_mode = v.parse::<SignMode>().ok(),
            "weight_mode" => {
                weight_mode = match v {
                    "analytic" => Some(WeightMode::Analytic),
                    "physical" => Some(WeightMode::Physical),
                    _ => None,
                }
            }
            _ => return Err(format_err(format!("unknown sidecar key `{k}`"))),
        }
    }
    match (n_layers, n_filters, sign_mode, weight_mode) {
        (Some(n_layers), Some(n_filters), Some(sign_mode), Some(weight_mode)) => Ok(CheckpointMeta {
            config: FistaNetConfig {
                n_layers,
                n_filters,
                sign_mode,
            },
            weight_mode,
        }),
        _ => Err(format_err("checkpoint sidecar is missing or has invalid fields")),
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &[Parameter], meta: &CheckpointMeta) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(fs::File::create(path)?);
    let count = u32::try_from(params.len()).map_err(|_| format_err("too many entries"))?;
    w.write_all(&count.to_le_bytes())?;
    for p in params {
        let name = p.name.as_bytes();
        let len = u16::try_from(name.len()).map_err(|_| format_err("parameter name too long"))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(name)?;
        encode(&p.value, &mut w)?;
    }
    w.flush()?;
    fs::write(sidecar_path(path), meta_text(meta))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let mut r = BufReader::new(fs::File::open(path)?);
    let truncated = |_| format_err("truncated checkpoint");
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(truncated)?;
    let count = u32::from_le_bytes(b4) as usize;
    let mut params = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2).map_err(truncated)?;
        let mut name = vec![0u8; u16::from_le_bytes(b2) as usize];
        r.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| format_err("parameter name is not UTF-8"))?;
        let value = decode(&mut r)?;
        params.push(Parameter { name, value });
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(format_err(format!("{} trailing bytes in checkpoint", rest.len())));
    }
    let sidecar = sidecar_path(path);
    let text = fs::read_to_string(&sidecar)
        .map_err(|e| format_err(format!("cannot read {}: {e}", sidecar.display())))?;
    Ok(Checkpoint {
        params,
        meta: parse_meta(&text)?,
    })
}
