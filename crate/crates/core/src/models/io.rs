use std::fs;
use std::path::Path;

use super::network::{ArchKind, Architecture, Network};
use super::train::ChangeModel;
use crate::dataset::NormalizationStats;
use crate::nn::Layer;
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"CHGCNN\x00\x01";
pub const MODEL_VERSION: u32 = 1;

const TAG_CONV: u8 = 0;
const TAG_DENSE: u8 = 1;
const TAG_RELU: u8 = 2;

/// Serializes a model.
///
/// Layout, little-endian throughout: magic, version (u32), architecture kind
/// (u8), channels (u32), layer count (u32) and one record per layer (tag u8
/// plus its sizes as u32), per-channel normalization mean and std (f64),
/// parameter count (u64), the parameter planes as f32 in layer order, and a
/// CRC-32 of everything before it.
pub fn encode_model(model: &ChangeModel) -> Vec<u8> {
    let net = &model.network;
    let arch = net.arch();
    let mut out = Vec::with_capacity(64 + 4 * net.params().len());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.push(match arch.kind {
        ArchKind::EarlyFusion => 0,
        ArchKind::Siamese => 1,
    });
    out.extend_from_slice(&(arch.channels as u32).to_le_bytes());
    let layers: Vec<&Layer> = net.layers().collect();
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for layer in layers {
        match layer {
            Layer::Conv { spec, .. } => {
                out.push(TAG_CONV);
                for v in [spec.k, spec.c_in, spec.c_out] {
                    out.extend_from_slice(&(v as u32).to_le_bytes());
                }
            }
            Layer::Dense { spec, .. } => {
                out.push(TAG_DENSE);
                for v in [spec.n_in, spec.n_out] {
                    out.extend_from_slice(&(v as u32).to_le_bytes());
                }
            }
            Layer::Relu => out.push(TAG_RELU),
        }
    }
    for (m, s) in model.normalization.mean.iter().zip(&model.normalization.std) {
        out.extend_from_slice(&m.to_le_bytes());
        out.extend_from_slice(&s.to_le_bytes());
    }
    out.extend_from_slice(&(net.params().len() as u64).to_le_bytes());
    for v in net.params().values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format("model file", "truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<ChangeModel> {
    if bytes.len() < MODEL_MAGIC.len() + 8 || &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
        return Err(Error::format("model file", "bad magic (not a model file or truncated)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(Error::format(
            "model file",
            format!("unsupported format version {version} (expected {MODEL_VERSION})"),
        ));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::format(
            "model file",
            format!("checksum mismatch (stored {stored:08x}, computed {actual:08x}); file is truncated or corrupt"),
        ));
    }

    let mut r = Reader { buf: body, pos: 12 };
    let kind = match r.u8()? {
        0 => ArchKind::EarlyFusion,
        1 => ArchKind::Siamese,
        k => return Err(Error::format("model file", format!("unknown architecture tag {k}"))),
    };
    let channels = r.u32()? as usize;
    let arch = Architecture::new(kind, channels).map_err(|e| Error::Incompatible(e.to_string()))?;
    let mut net = Network::<f32>::zeroed(arch)?;

    let n_layers = r.u32()? as usize;
    let expected: Vec<Layer> = net.layers().cloned().collect();
    if n_layers != expected.len() {
        return Err(Error::Incompatible(format!(
            "{n_layers} layers recorded, the {kind} architecture with {channels} channels has {}",
            expected.len()
        )));
    }
    for (i, layer) in expected.iter().enumerate() {
        let tag = r.u8()?;
        let ok = match (tag, layer) {
            (TAG_CONV, Layer::Conv { spec, .. }) => [r.u32()?, r.u32()?, r.u32()?] == [spec.k, spec.c_in, spec.c_out].map(|v| v as u32),
            (TAG_DENSE, Layer::Dense { spec, .. }) => [r.u32()?, r.u32()?] == [spec.n_in, spec.n_out].map(|v| v as u32),
            (TAG_RELU, Layer::Relu) => true,
            _ => false,
        };
        if !ok {
            return Err(Error::Incompatible(format!("layer {i} does not match the {kind} architecture")));
        }
    }

    let mut mean = Vec::with_capacity(channels);
    let mut std = Vec::with_capacity(channels);
    for _ in 0..channels {
        mean.push(r.f64()?);
        std.push(r.f64()?);
    }
    let n_params = r.u64()? as usize;
    if n_params != net.params().len() {
        return Err(Error::Incompatible(format!(
            "{n_params} parameters recorded, architecture needs {}",
            net.params().len()
        )));
    }
    let raw = r.take(4 * n_params)?;
    for (dst, src) in net.params_mut().values_mut().iter_mut().zip(raw.chunks_exact(4)) {
        *dst = f32::from_le_bytes(src.try_into().expect("4 bytes"));
    }
    if r.pos != body.len() {
        return Err(Error::format("model file", "trailing bytes before checksum"));
    }
    ChangeModel::new(net, NormalizationStats { mean, std })
}

pub fn save_model(model: &ChangeModel, path: &Path) -> Result<()> {
    fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ChangeModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
