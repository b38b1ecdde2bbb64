//! `CBN1` checkpoints: magic, `u32` little-endian header length, JSON header,
//! then per layer the filter `w[j][k][s]` followed by the bias, as
//! little-endian `f64`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constructions::{stride_network, StrideNetwork, StrideSpec};
use crate::error::{Error, Result};
use crate::fourier::Grid;
use crate::linalg::{ConvFilter, PoolingKind, PoolingSpec};
use crate::network::NetworkParams;

pub const MAGIC: &[u8; 4] = b"CBN1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolingHeader {
    pub kind: String,
    pub beta: Option<f64>,
    pub m: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub n: usize,
    pub dims: usize,
    #[serde(rename = "L")]
    pub depth: usize,
    pub channels: Vec<usize>,
    pub pooling: PoolingHeader,
    pub seed: Option<u64>,
    #[serde(default)]
    pub downsample: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams,
    pub seed: Option<u64>,
}

fn pooling_header(p: &PoolingSpec) -> PoolingHeader {
    PoolingHeader {
        kind: p.kind.name().to_string(),
        beta: p.kind.beta(),
        m: p.m.clone(),
    }
}

fn pooling_from_header(h: &PoolingHeader, grid: Grid) -> Result<PoolingSpec> {
    let kind = match h.kind.as_str() {
        "identity" => PoolingKind::Identity,
        "blend_avg3" => PoolingKind::BlendAvg3 {
            beta: h.beta.ok_or_else(|| Error::Format("blend_avg3 pooling without beta".into()))?,
        },
        "custom" => PoolingKind::Custom { m: h.m.clone() },
        other => return Err(Error::Format(format!("unknown pooling kind {other:?}"))),
    };
    let spec = PoolingSpec::new(kind, grid)?;
    if spec.m.len() != h.m.len() || spec.m.iter().zip(&h.m).any(|(a, b)| a.to_bits() != b.to_bits()) {
        return Err(Error::Format("stored pooling filter disagrees with its kind".into()));
    }
    Ok(spec)
}

pub fn to_bytes(params: &NetworkParams, seed: Option<u64>) -> Result<Vec<u8>> {
    let g = params.input_grid();
    let header = CheckpointHeader {
        version: VERSION,
        n: g.side(),
        dims: g.dims(),
        depth: params.depth(),
        channels: params.widths(),
        pooling: pooling_header(&params.pooling),
        seed,
        downsample: params.downsample.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + json.len() + 8 * params.num_parameters());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in params.to_flat() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing CBN1 magic".into()));
    }
    let len = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
    let json = bytes
        .get(8..8 + len)
        .ok_or_else(|| Error::Format("truncated header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(json)?;
    if header.version != VERSION {
        return Err(Error::Format(format!("unsupported version {}", header.version)));
    }
    if header.channels.len() != header.depth + 1 || header.depth == 0 {
        return Err(Error::Format("channel list does not match depth".into()));
    }
    let strides = if header.downsample.is_empty() {
        vec![1; header.depth]
    } else {
        header.downsample.clone()
    };
    if strides.len() != header.depth || strides.contains(&0) {
        return Err(Error::Format("invalid downsampling list".into()));
    }
    let grid = Grid::new(header.n, header.dims)?;
    let pooling = pooling_from_header(&header.pooling, grid)?;
    let body = &bytes[8 + len..];
    if body.len() % 8 != 0 {
        return Err(Error::Format("parameter block is not a whole number of f64".into()));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut layers = Vec::with_capacity(header.depth);
    let mut g = grid;
    let mut pos = 0;
    for l in 0..header.depth {
        if strides[l] > 1 {
            g = Grid::new(g.side() / strides[l], g.dims())?;
        }
        let (ci, co) = (header.channels[l], header.channels[l + 1]);
        let nw = g.pixels() * co * ci;
        let chunk = values
            .get(pos..pos + nw + co)
            .ok_or_else(|| Error::Format(format!("parameters end inside layer {}", l + 1)))?;
        layers.push(ConvFilter::new(g, co, ci, chunk[..nw].to_vec(), chunk[nw..].to_vec())?);
        pos += nw + co;
    }
    if pos != values.len() {
        return Err(Error::Format(format!("{} trailing values", values.len() - pos)));
    }
    Ok(Checkpoint {
        params: NetworkParams::with_downsampling(pooling, layers, strides)?,
        seed: header.seed,
    })
}

pub fn save_checkpoint(path: &Path, params: &NetworkParams, seed: Option<u64>) -> Result<()> {
    std::fs::write(path, to_bytes(params, seed)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    from_bytes(&std::fs::read(path)?)
}

/// Manifest of a stride network: three checkpoint files and the stride.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrideManifest {
    pub s: usize,
    pub n: usize,
    pub inner_n: usize,
    pub inner_pooling: PoolingHeader,
    pub f1: String,
    pub inner: String,
    pub f2: String,
}

/// Writes `f1.cbn`, `inner.cbn`, `f2.cbn` and `stride.json` into `dir`.
pub fn save_stride_network(dir: &Path, net: &StrideNetwork) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    for (name, p) in [("f1.cbn", &net.f1), ("inner.cbn", &net.inner), ("f2.cbn", &net.f2)] {
        save_checkpoint(&dir.join(name), p, None)?;
    }
    let manifest = StrideManifest {
        s: net.spec.s,
        n: net.spec.n,
        inner_n: net.spec.inner_n,
        inner_pooling: pooling_header(&net.spec.inner_pooling),
        f1: "f1.cbn".into(),
        inner: "inner.cbn".into(),
        f2: "f2.cbn".into(),
    };
    let path = dir.join("stride.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

pub fn load_stride_network(manifest_path: &Path) -> Result<StrideNetwork> {
    let m: StrideManifest = serde_json::from_slice(&std::fs::read(manifest_path)?)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let f1 = load_checkpoint(&dir.join(&m.f1))?.params;
    let inner = load_checkpoint(&dir.join(&m.inner))?.params;
    let f2 = load_checkpoint(&dir.join(&m.f2))?.params;
    let inner_grid = Grid::new(m.inner_n, f1.input_grid().dims())?;
    let spec = StrideSpec::new(m.s, &f1.pooling)?.with_inner_pooling(pooling_from_header(&m.inner_pooling, inner_grid)?)?;
    if spec.n != m.n {
        return Err(Error::Format("manifest side disagrees with f1".into()));
    }
    stride_network(f1, inner, f2, spec)
}
