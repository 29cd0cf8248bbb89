//! Portable checkpoint files holding named `f64` tensors.
//!
//! Layout (all text lines end in `\n`, UTF-8):
//!
//! ```text
//! GNNASSOC-CHECKPOINT 1
//! tensors <count>
//! <name> <rank> <dim_0> ... <dim_{rank-1}> <offset>
//! ...
//! end
//! <payload>
//! ```
//!
//! One descriptor line per tensor, sorted by name. `offset` counts `f64`
//! values from the start of the payload. The payload is the concatenation of
//! every tensor's row-major values as IEEE-754 little-endian 64-bit floats.
//! Names contain no whitespace.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

const MAGIC: &str = "GNNASSOC-CHECKPOINT 1";

pub fn encode(tensors: &BTreeMap<String, Tensor>) -> Result<Vec<u8>> {
    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    header.push_str(&format!("tensors {}\n", tensors.len()));
    let mut offset = 0usize;
    for (name, t) in tensors {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::Checkpoint(format!("invalid tensor name {name:?}")));
        }
        header.push_str(name);
        header.push_str(&format!(" {}", t.shape().len()));
        for d in t.shape() {
            header.push_str(&format!(" {d}"));
        }
        header.push_str(&format!(" {offset}\n"));
        offset += t.len();
    }
    header.push_str("end\n");

    let mut out = header.into_bytes();
    out.reserve(offset * 8);
    for t in tensors.values() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<BTreeMap<String, Tensor>> {
    let bad = |m: String| Error::Checkpoint(m);
    let mut pos = 0usize;
    let mut next_line = || -> Result<&str> {
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("truncated header".into()))?;
        let line = std::str::from_utf8(&rest[..nl]).map_err(|e| bad(e.to_string()))?;
        pos += nl + 1;
        Ok(line)
    };

    if next_line()? != MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let count: usize = next_line()?
        .strip_prefix("tensors ")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| bad("missing tensor count".into()))?;

    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let line = next_line()?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| bad(format!("bad number {s:?} in line {line:?}")))
        };
        if fields.len() < 3 {
            return Err(bad(format!("bad descriptor {line:?}")));
        }
        let rank = parse(fields[1])?;
        if fields.len() != rank + 3 {
            return Err(bad(format!("bad descriptor {line:?}")));
        }
        let shape = fields[2..2 + rank]
            .iter()
            .map(|s| parse(s))
            .collect::<Result<Vec<_>>>()?;
        let offset = parse(fields[2 + rank])?;
        entries.push((fields[0].to_string(), shape, offset));
    }
    if next_line()? != "end" {
        return Err(bad("missing end marker".into()));
    }

    let payload = &bytes[pos..];
    if payload.len() % 8 != 0 {
        return Err(bad("payload is not a whole number of f64 values".into()));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();

    let mut out = BTreeMap::new();
    for (name, shape, offset) in entries {
        let n: usize = shape.iter().product();
        let data = values
            .get(offset..offset + n)
            .ok_or_else(|| bad(format!("tensor {name} runs past the payload")))?
            .to_vec();
        out.insert(name, Tensor::new(shape, data)?);
    }
    Ok(out)
}

pub fn save(path: impl AsRef<Path>, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
    let bytes = encode(tensors)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<BTreeMap<String, Tensor>> {
    decode(&fs::read(path)?)
}
