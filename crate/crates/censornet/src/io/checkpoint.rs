//! Checkpoint container: magic "CNSR", version u32, then a sequence of named
//! tensors (name length u16, name bytes, rank u8, one u32 per dimension,
//! 64-bit little-endian values).
//!
//! Numeric state (parameters, optimizer moments, power-iteration vectors,
//! counters) lives in tensors; the two configuration records travel as
//! UTF-8 JSON encoded one byte per value, so a reader needs nothing beyond
//! the tensor grammar. The decoder rebuilds the structural skeleton from the
//! configurations and then fills every tensor by name, which makes a missing
//! or reshaped tensor a hard error rather than a silent default.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::Error;
use crate::train::{init_checkpoint, Checkpoint, TrainConfig};
use crate::model::TaskModelConfig;

pub const MAGIC: [u8; 4] = *b"CNSR";
pub const VERSION: u32 = 1;

struct TensorWriter {
    buf: Vec<u8>,
}

impl TensorWriter {
    fn new() -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(&MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        TensorWriter { buf }
    }

    fn tensor(&mut self, name: &str, values: &[f64]) -> Result<(), Error> {
        if name.len() > u16::MAX as usize {
            return Err(Error::Format(format!("tensor name too long: {}", name.len())));
        }
        self.buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        self.buf.extend_from_slice(name.as_bytes());
        self.buf.push(1u8); // rank
        self.buf.extend_from_slice(&(values.len() as u32).to_le_bytes());
        for v in values {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        Ok(())
    }

    fn bytes_tensor(&mut self, name: &str, bytes: &[u8]) -> Result<(), Error> {
        let values: Vec<f64> = bytes.iter().map(|&b| b as f64).collect();
        self.tensor(name, &values)
    }
}

fn word_pos_limbs(word_pos: u128) -> [f64; 4] {
    let mut limbs = [0.0; 4];
    for (i, limb) in limbs.iter_mut().enumerate() {
        *limb = ((word_pos >> (32 * i)) & 0xffff_ffff) as f64;
    }
    limbs
}

fn limbs_to_word_pos(limbs: &[f64]) -> Result<u128, Error> {
    if limbs.len() != 4 {
        return Err(Error::Format(format!("rng state needs 4 limbs, got {}", limbs.len())));
    }
    let mut out = 0u128;
    for (i, &l) in limbs.iter().enumerate() {
        if !(l.is_finite() && l >= 0.0 && l <= u32::MAX as f64 && l.fract() == 0.0) {
            return Err(Error::Format(format!("invalid rng limb {}", l)));
        }
        out |= (l as u128) << (32 * i);
    }
    Ok(out)
}

fn emit_params(w: &mut TensorWriter, prefix: &str, params: &[&[f64]]) -> Result<(), Error> {
    for (i, p) in params.iter().enumerate() {
        w.tensor(&format!("{}/p{}", prefix, i), p)?;
    }
    Ok(())
}

fn emit_opt(
    w: &mut TensorWriter,
    prefix: &str,
    opt: &crate::nn::AdamWState,
) -> Result<(), Error> {
    w.tensor(&format!("{}/step", prefix), &[opt.step as f64])?;
    for (i, m) in opt.m.iter().enumerate() {
        w.tensor(&format!("{}/m{}", prefix, i), m)?;
    }
    for (i, v) in opt.v.iter().enumerate() {
        w.tensor(&format!("{}/v{}", prefix, i), v)?;
    }
    Ok(())
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>, Error> {
    let mut w = TensorWriter::new();
    let config_json = serde_json::to_vec(&ckpt.config)
        .map_err(|e| Error::Format(format!("config serialization: {}", e)))?;
    w.bytes_tensor("meta/config", &config_json)?;
    let model_json = serde_json::to_vec(&ckpt.task.config)
        .map_err(|e| Error::Format(format!("model config serialization: {}", e)))?;
    w.bytes_tensor("meta/model_config", &model_json)?;
    let n_nuisance = ckpt
        .censors
        .first()
        .map_or(0, |c| c.spec.n_nuisance);
    w.tensor("meta/n_nuisance", &[n_nuisance as f64])?;
    w.tensor("meta/epoch", &[ckpt.epoch as f64])?;
    w.tensor("meta/rng_word_pos", &word_pos_limbs(ckpt.train_word_pos))?;

    emit_params(&mut w, "task", &crate::train::task_param_slices(&ckpt.task))?;
    emit_opt(&mut w, "opt/task", &ckpt.task_opt)?;
    for (c, censor) in ckpt.censors.iter().enumerate() {
        emit_params(&mut w, &format!("censor{}", c), &censor.net.param_slices())?;
        emit_opt(&mut w, &format!("opt/censor{}", c), &ckpt.censor_opts[c])?;
        if let Some(states) = &censor.spectral {
            for (j, st) in states.iter().enumerate() {
                w.tensor(&format!("censor{}/u{}", c, j), &st.u)?;
            }
        }
    }
    Ok(w.buf)
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), Error> {
    let bytes = encode_checkpoint(ckpt)?;
    std::fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

fn parse_tensors(bytes: &[u8]) -> Result<BTreeMap<String, Vec<f64>>, Error> {
    let mut off = 0usize;
    let need = |off: usize, n: usize, what: &str| -> Result<(), Error> {
        if off + n > bytes.len() {
            Err(Error::Format(format!(
                "truncated while reading {} at offset {}",
                what, off
            )))
        } else {
            Ok(())
        }
    };
    need(off, 4, "magic")?;
    if bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic at offset 0 (want \"CNSR\")".into()));
    }
    off += 4;
    need(off, 4, "version")?;
    let version = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {} at offset 4",
            version
        )));
    }
    off += 4;
    let mut tensors = BTreeMap::new();
    while off < bytes.len() {
        need(off, 2, "tensor name length")?;
        let name_len = u16::from_le_bytes(bytes[off..off + 2].try_into().unwrap()) as usize;
        off += 2;
        need(off, name_len, "tensor name")?;
        let name = std::str::from_utf8(&bytes[off..off + name_len])
            .map_err(|_| Error::Format(format!("non-UTF-8 tensor name at offset {}", off)))?
            .to_string();
        off += name_len;
        need(off, 1, "tensor rank")?;
        let rank = bytes[off] as usize;
        off += 1;
        let mut count = 1usize;
        for _ in 0..rank {
            need(off, 4, "tensor dimension")?;
            let d = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
            off += 4;
            count = count
                .checked_mul(d)
                .ok_or_else(|| Error::Format("tensor size overflow".into()))?;
        }
        need(off, 8 * count, "tensor values")?;
        let values: Vec<f64> = bytes[off..off + 8 * count]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        off += 8 * count;
        if tensors.insert(name.clone(), values).is_some() {
            return Err(Error::Format(format!("duplicate tensor \"{}\"", name)));
        }
    }
    Ok(tensors)
}

fn tensor_bytes(tensors: &BTreeMap<String, Vec<f64>>, name: &str) -> Result<Vec<u8>, Error> {
    let values = tensors
        .get(name)
        .ok_or_else(|| Error::Format(format!("missing tensor \"{}\"", name)))?;
    values
        .iter()
        .map(|&v| {
            if v.is_finite() && v >= 0.0 && v <= 255.0 && v.fract() == 0.0 {
                Ok(v as u8)
            } else {
                Err(Error::Format(format!("invalid byte value {} in \"{}\"", v, name)))
            }
        })
        .collect()
}

fn fill_params(
    tensors: &BTreeMap<String, Vec<f64>>,
    prefix: &str,
    params: &mut [&mut [f64]],
) -> Result<(), Error> {
    for (i, p) in params.iter_mut().enumerate() {
        let name = format!("{}/p{}", prefix, i);
        let values = tensors
            .get(&name)
            .ok_or_else(|| Error::Format(format!("missing tensor \"{}\"", name)))?;
        if values.len() != p.len() {
            return Err(Error::Format(format!(
                "tensor \"{}\" has {} values, expected {}",
                name,
                values.len(),
                p.len()
            )));
        }
        p.copy_from_slice(values);
    }
    Ok(())
}

fn fill_opt(
    tensors: &BTreeMap<String, Vec<f64>>,
    prefix: &str,
    opt: &mut crate::nn::AdamWState,
) -> Result<(), Error> {
    let step = tensors
        .get(&format!("{}/step", prefix))
        .ok_or_else(|| Error::Format(format!("missing tensor \"{}/step\"", prefix)))?;
    if step.len() != 1 || step[0] < 0.0 || step[0].fract() != 0.0 {
        return Err(Error::Format(format!("invalid optimizer step in \"{}\"", prefix)));
    }
    opt.step = step[0] as u64;
    for (buffers, tag) in [(&mut opt.m, "m"), (&mut opt.v, "v")] {
        for (i, buf) in buffers.iter_mut().enumerate() {
            let name = format!("{}/{}{}", prefix, tag, i);
            let values = tensors
                .get(&name)
                .ok_or_else(|| Error::Format(format!("missing tensor \"{}\"", name)))?;
            if values.len() != buf.len() {
                return Err(Error::Format(format!(
                    "tensor \"{}\" has {} values, expected {}",
                    name,
                    values.len(),
                    buf.len()
                )));
            }
            buf.copy_from_slice(values);
        }
    }
    Ok(())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, Error> {
    let tensors = parse_tensors(bytes)?;
    let config: TrainConfig = serde_json::from_slice(&tensor_bytes(&tensors, "meta/config")?)
        .map_err(|e| Error::Format(format!("config: {}", e)))?;
    let model_cfg: TaskModelConfig =
        serde_json::from_slice(&tensor_bytes(&tensors, "meta/model_config")?)
            .map_err(|e| Error::Format(format!("model config: {}", e)))?;
    let n_nuisance_t = tensors
        .get("meta/n_nuisance")
        .ok_or_else(|| Error::Format("missing tensor \"meta/n_nuisance\"".into()))?;
    let n_nuisance = n_nuisance_t.first().copied().unwrap_or(0.0) as usize;
    // the skeleton carries the right shapes; every tensor is then overwritten
    let mut ckpt = init_checkpoint(&config, &model_cfg, n_nuisance.max(2))?;

    let epoch_t = tensors
        .get("meta/epoch")
        .ok_or_else(|| Error::Format("missing tensor \"meta/epoch\"".into()))?;
    ckpt.epoch = epoch_t.first().copied().unwrap_or(0.0) as usize;
    let rng_t = tensors
        .get("meta/rng_word_pos")
        .ok_or_else(|| Error::Format("missing tensor \"meta/rng_word_pos\"".into()))?;
    ckpt.train_word_pos = limbs_to_word_pos(rng_t)?;

    fill_params(&tensors, "task", &mut crate::train::task_param_slices_mut(&mut ckpt.task))?;
    fill_opt(&tensors, "opt/task", &mut ckpt.task_opt)?;
    for c in 0..ckpt.censors.len() {
        {
            let censor = &mut ckpt.censors[c];
            fill_params(
                &tensors,
                &format!("censor{}", c),
                &mut censor.net.param_slices_mut(),
            )?;
            if let Some(states) = &mut censor.spectral {
                for (j, st) in states.iter_mut().enumerate() {
                    let name = format!("censor{}/u{}", c, j);
                    let values = tensors
                        .get(&name)
                        .ok_or_else(|| Error::Format(format!("missing tensor \"{}\"", name)))?;
                    if values.len() != st.u.len() {
                        return Err(Error::Format(format!(
                            "tensor \"{}\" has {} values, expected {}",
                            name,
                            values.len(),
                            st.u.len()
                        )));
                    }
                    st.u.copy_from_slice(values);
                }
            }
        }
        fill_opt(&tensors, &format!("opt/censor{}", c), &mut ckpt.censor_opts[c])?;
    }
    Ok(ckpt)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, Error> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_checkpoint(&bytes)
}
