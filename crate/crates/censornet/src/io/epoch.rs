//! Binary trial container. Layout:
//!
//! ```text
//! magic "EEGC" | version u32 | n_trials u32 | channels u32 | samples u32
//!             | n_classes u32 | n_nuisance u32            (28-byte header)
//! per trial:  y u8 | s u16 | channels * samples f32, row-major
//! ```
//!
//! All integers and floats little-endian. Total length is
//! `28 + n_trials * (3 + 4 * channels * samples)`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::Error;
use crate::nn::RealMatrix;
use crate::synth::{InputKind, TrialBatch};

pub const MAGIC: [u8; 4] = *b"EEGC";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;

fn format_err(msg: String) -> Error {
    Error::Format(msg)
}

/// Channel/sample shape used on disk; vector data is stored as one sample
/// per channel and read back as vector data.
fn disk_shape(input: InputKind) -> (u32, u32) {
    match input {
        InputKind::Vector { dim } => (dim as u32, 1),
        InputKind::Epoched { channels, samples } => (channels as u32, samples as u32),
    }
}

pub fn write_epoch_file(path: &Path, batch: &TrialBatch) -> Result<(), Error> {
    let (channels, samples) = disk_shape(batch.input);
    let mut buf = Vec::with_capacity(
        HEADER_LEN + batch.len() * (3 + 4 * (channels * samples) as usize),
    );
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(batch.len() as u32).to_le_bytes());
    buf.extend_from_slice(&channels.to_le_bytes());
    buf.extend_from_slice(&samples.to_le_bytes());
    buf.extend_from_slice(&(batch.n_classes as u32).to_le_bytes());
    buf.extend_from_slice(&(batch.n_nuisance as u32).to_le_bytes());
    for i in 0..batch.len() {
        let y = batch.y[i];
        let s = batch.s[i];
        if y >= batch.n_classes || y > u8::MAX as usize {
            return Err(format_err(format!("trial {}: class label {} out of range", i, y)));
        }
        if s >= batch.n_nuisance || s > u16::MAX as usize {
            return Err(format_err(format!("trial {}: nuisance label {} out of range", i, s)));
        }
        buf.push(y as u8);
        buf.extend_from_slice(&(s as u16).to_le_bytes());
        for &v in batch.x.row(i) {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

fn take<'a>(bytes: &'a [u8], offset: &mut usize, n: usize, what: &str) -> Result<&'a [u8], Error> {
    if *offset + n > bytes.len() {
        return Err(format_err(format!(
            "truncated while reading {} at offset {}: need {} bytes, {} remain",
            what,
            *offset,
            n,
            bytes.len() - *offset
        )));
    }
    let out = &bytes[*offset..*offset + n];
    *offset += n;
    Ok(out)
}

fn read_u32(bytes: &[u8], offset: &mut usize, what: &str) -> Result<u32, Error> {
    let b = take(bytes, offset, 4, what)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn read_epoch_file(path: &Path) -> Result<TrialBatch, Error> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_epoch_bytes(&bytes)
}

pub fn decode_epoch_bytes(bytes: &[u8]) -> Result<TrialBatch, Error> {
    let mut off = 0usize;
    let magic = take(bytes, &mut off, 4, "magic")?;
    if magic != MAGIC {
        return Err(format_err(format!(
            "bad magic {:?} at offset 0 (want \"EEGC\")",
            &magic
        )));
    }
    let version = read_u32(bytes, &mut off, "version")?;
    if version != VERSION {
        return Err(format_err(format!(
            "unsupported version {} at offset 4 (want {})",
            version, VERSION
        )));
    }
    let n_trials = read_u32(bytes, &mut off, "n_trials")? as usize;
    let channels = read_u32(bytes, &mut off, "channels")? as usize;
    let samples = read_u32(bytes, &mut off, "samples")? as usize;
    let n_classes = read_u32(bytes, &mut off, "n_classes")? as usize;
    let n_nuisance = read_u32(bytes, &mut off, "n_nuisance")? as usize;
    if channels == 0 || samples == 0 {
        return Err(format_err(format!(
            "degenerate shape {} channels x {} samples",
            channels, samples
        )));
    }
    let trial_len = 3 + 4 * channels * samples;
    let expected = HEADER_LEN + n_trials * trial_len;
    if bytes.len() != expected {
        return Err(format_err(format!(
            "payload length mismatch: expected {} bytes for {} trials, got {}",
            expected,
            n_trials,
            bytes.len()
        )));
    }
    let dim = channels * samples;
    let mut x = RealMatrix::zeros(n_trials, dim);
    let mut y = Vec::with_capacity(n_trials);
    let mut s = Vec::with_capacity(n_trials);
    for i in 0..n_trials {
        let yb = take(bytes, &mut off, 1, "class label")?[0] as usize;
        let sb = take(bytes, &mut off, 2, "nuisance label")?;
        let sv = u16::from_le_bytes([sb[0], sb[1]]) as usize;
        if yb >= n_classes {
            return Err(format_err(format!(
                "trial {}: class label {} >= n_classes {}",
                i, yb, n_classes
            )));
        }
        if sv >= n_nuisance {
            return Err(format_err(format!(
                "trial {}: nuisance label {} >= n_nuisance {}",
                i, sv, n_nuisance
            )));
        }
        let payload = take(bytes, &mut off, 4 * dim, "trial payload")?;
        for (j, chunk) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            x.set(i, j, v as f64);
        }
        y.push(yb);
        s.push(sv);
    }
    let input = if samples == 1 {
        InputKind::Vector { dim: channels }
    } else {
        InputKind::Epoched { channels, samples }
    };
    TrialBatch::new(x, input, y, s, n_classes, n_nuisance)
}
