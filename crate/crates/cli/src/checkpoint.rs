//! Versioned weight bundle.
//!
//! Layout, all integers little-endian u32:
//! magic `SFCKPT\0\0`, version, the seven config fields, 32-byte vocabulary
//! hash, tensor count, then per tensor (name length, name, rows, cols),
//! then every tensor's f32 data in table order.

use std::path::Path;

use sha2::{Digest, Sha256};
use strandforge_core::neural::{Model, ModelConfig, ParamStore, Tensor};
use strandforge_core::tokenizer::Vocab;

use crate::error::{CliError, Result};

const MAGIC: &[u8; 8] = b"SFCKPT\0\0";
pub const VERSION: u32 = 1;

pub fn vocab_hash(vocab: &Vocab) -> [u8; 32] {
    Sha256::digest(vocab.to_text().as_bytes()).into()
}

pub fn encode_checkpoint(model: &Model<f32>, vocab_hash: &[u8; 32]) -> Vec<u8> {
    let c = &model.config;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let put = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    put(&mut out, VERSION as usize);
    for v in [c.hidden, c.layers, c.heads, c.ffn, c.max_seq, c.vocab_size, c.n_languages] {
        put(&mut out, v);
    }
    out.extend_from_slice(vocab_hash);
    let p = &model.params;
    put(&mut out, p.names.len());
    for (name, t) in p.names.iter().zip(&p.tensors) {
        put(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put(&mut out, t.rows);
        put(&mut out, t.cols);
    }
    for t in &p.tensors {
        for x in &t.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or("truncated file")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn decode_checkpoint(buf: &[u8]) -> std::result::Result<(Model<f32>, [u8; 32]), String> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("not a checkpoint".into());
    }
    let version = r.u32()? as u32;
    if version != VERSION {
        return Err(format!("unsupported version {}", version));
    }
    let mut f = [0usize; 7];
    for v in &mut f {
        *v = r.u32()?;
    }
    let config = ModelConfig {
        hidden: f[0],
        layers: f[1],
        heads: f[2],
        ffn: f[3],
        max_seq: f[4],
        vocab_size: f[5],
        n_languages: f[6],
    };
    let hash: [u8; 32] = r.take(32)?.try_into().unwrap();
    let n = r.u32()?;
    let mut table = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| "tensor name is not UTF-8")?.to_string();
        let rows = r.u32()?;
        let cols = r.u32()?;
        table.push((name, rows, cols));
    }
    let mut params = ParamStore::default();
    for (name, rows, cols) in table {
        let bytes = r.take(rows.checked_mul(cols).and_then(|x| x.checked_mul(4)).ok_or("tensor too large")?)?;
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        params.add(name, Tensor::from_vec(rows, cols, data));
    }
    if r.pos != buf.len() {
        return Err("trailing bytes".into());
    }
    let model = Model::from_params(config, params).map_err(|e| e.to_string())?;
    Ok((model, hash))
}

pub fn load_checkpoint(path: &Path) -> Result<(Model<f32>, [u8; 32])> {
    if !path.exists() {
        return Err(CliError::MissingInput(path.into()));
    }
    let buf = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_checkpoint(&buf).map_err(|detail| CliError::Checkpoint { path: path.into(), detail })
}
