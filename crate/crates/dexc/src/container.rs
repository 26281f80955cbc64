//! MTC v1 checkpoint container.
//!
//! A checkpoint is an ordered list of named float32 tensors plus an ordered
//! list of opaque `(key, bytes)` extras entries (optimizer state, tokenizer
//! blobs, experiment notes, ...). The serialized layout is fixed — no
//! padding, no alignment, all integers little-endian:
//!
//! ```text
//! magic "MTC1" | version u16 = 1 | tensor_count u32 | extras_count u32
//! per tensor: name_len u16 | name (UTF-8) | rank u8 | dim u32 * rank
//!             | payload_len u64 | payload (f32 LE, row-major)
//! per extra:  key_len u16 | key (UTF-8) | value_len u64 | value bytes
//! ```
//!
//! [`read_checkpoint`] accepts exactly the canonical serialization of a
//! valid checkpoint: declared payload lengths must equal shape-product * 4,
//! tensor names must be unique and non-empty, every value must be finite,
//! and trailing bytes are rejected. Anything else is
//! [`ContainerError::Format`]. The reader is fuzz-safe: every declared
//! length is validated against the remaining input *before* any allocation,
//! so arbitrary bytes can neither panic nor trigger huge allocations.

use std::collections::HashSet;
use std::io::Write;

use thiserror::Error;

/// File magic, first four bytes of every checkpoint.
pub const MAGIC: [u8; 4] = *b"MTC1";
/// The only format version this module reads or writes.
pub const VERSION: u16 = 1;
/// Serialized size of the fixed header: magic + version + two counts.
pub const HEADER_BYTES: u64 = 4 + 2 + 4 + 4;

/// Fixed per-tensor overhead next to name bytes, dims and payload:
/// name_len u16 + rank u8 + payload_len u64.
pub const TENSOR_OVERHEAD_BYTES: u64 = 2 + 1 + 8;
/// Fixed per-extra overhead next to key and value bytes: key_len u16 +
/// value_len u64.
pub const EXTRA_OVERHEAD_BYTES: u64 = 2 + 8;

#[derive(Debug, Error)]
pub enum ContainerError {
    /// The in-memory checkpoint violates an invariant (SchemaError).
    #[error("schema error: {0}")]
    Schema(String),
    /// The byte stream is not a canonical MTC v1 file (FormatError).
    #[error("format error: {0}")]
    Format(String),
}

/// One named tensor. `data.len()` must equal the product of `shape`
/// (rank 0 means a scalar: product 1), every dim must be >= 1, and every
/// value must be finite. Steganographic embedding only rewrites mantissa
/// bits, so carriers stay finite and these invariants survive embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<u32>,
    pub data: Vec<f32>,
}

impl TensorEntry {
    pub fn new(name: impl Into<String>, shape: Vec<u32>, data: Vec<f32>) -> Self {
        TensorEntry {
            name: name.into(),
            shape,
            data,
        }
    }

    /// Number of parameters (shape product).
    pub fn param_count(&self) -> u64 {
        self.shape.iter().map(|&d| d as u64).product()
    }

    /// Serialized footprint of this entry in bytes.
    pub fn serialized_bytes(&self) -> u64 {
        TENSOR_OVERHEAD_BYTES
            + self.name.len() as u64
            + 4 * self.shape.len() as u64
            + 4 * self.data.len() as u64
    }
}

/// An in-memory checkpoint; field order mirrors the file layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u16,
    pub tensors: Vec<TensorEntry>,
    pub extras: Vec<(String, Vec<u8>)>,
}

impl Default for Checkpoint {
    fn default() -> Self {
        Checkpoint {
            version: VERSION,
            tensors: Vec::new(),
            extras: Vec::new(),
        }
    }
}

impl Checkpoint {
    pub fn new(tensors: Vec<TensorEntry>, extras: Vec<(String, Vec<u8>)>) -> Self {
        Checkpoint {
            version: VERSION,
            tensors,
            extras,
        }
    }

    pub fn find_tensor(&self, name: &str) -> Option<&TensorEntry> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn find_tensor_mut(&mut self, name: &str) -> Option<&mut TensorEntry> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub fn find_extra(&self, key: &str) -> Option<&[u8]> {
        self.extras
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_slice())
    }

    /// Checks every schema invariant; [`write_checkpoint`] calls this first.
    pub fn validate(&self) -> Result<(), ContainerError> {
        let schema = |msg: String| ContainerError::Schema(msg);
        if self.version != VERSION {
            return Err(schema(format!("unsupported version {}", self.version)));
        }
        if self.tensors.len() > u32::MAX as usize {
            return Err(schema("tensor count exceeds u32".into()));
        }
        if self.extras.len() > u32::MAX as usize {
            return Err(schema("extras count exceeds u32".into()));
        }
        let mut names = HashSet::new();
        for t in &self.tensors {
            if t.name.is_empty() {
                return Err(schema("tensor with empty name".into()));
            }
            if t.name.len() > u16::MAX as usize {
                return Err(schema(format!(
                    "tensor name '{}...' too long",
                    &t.name[..32]
                )));
            }
            if !names.insert(t.name.as_str()) {
                return Err(schema(format!("duplicate tensor name '{}'", t.name)));
            }
            if t.shape.len() > u8::MAX as usize {
                return Err(schema(format!(
                    "tensor '{}' rank {} exceeds u8",
                    t.name,
                    t.shape.len()
                )));
            }
            let mut product: u64 = 1;
            for &d in &t.shape {
                if d == 0 {
                    return Err(schema(format!("tensor '{}' has a zero dim", t.name)));
                }
                product = product
                    .checked_mul(d as u64)
                    .filter(|p| p.checked_mul(4).is_some())
                    .ok_or_else(|| {
                        schema(format!("tensor '{}' shape product overflows", t.name))
                    })?;
            }
            if product != t.data.len() as u64 {
                return Err(schema(format!(
                    "tensor '{}' declares {} params but holds {} values",
                    t.name,
                    product,
                    t.data.len()
                )));
            }
            if let Some(i) = t.data.iter().position(|v| !v.is_finite()) {
                return Err(schema(format!(
                    "tensor '{}' has a non-finite value at index {}",
                    t.name, i
                )));
            }
        }
        let mut keys = HashSet::new();
        for (k, _) in &self.extras {
            if k.len() > u16::MAX as usize {
                return Err(schema("extras key too long".into()));
            }
            if !keys.insert(k.as_str()) {
                return Err(schema(format!("duplicate extras key '{k}'")));
            }
        }
        Ok(())
    }

    /// Total parameter count over all tensors.
    pub fn parameter_count(&self) -> u64 {
        self.tensors.iter().map(TensorEntry::param_count).sum()
    }

    /// Exact serialized size in bytes, computed without serializing.
    pub fn total_size(&self) -> u64 {
        let tensors: u64 = self.tensors.iter().map(TensorEntry::serialized_bytes).sum();
        let extras: u64 = self
            .extras
            .iter()
            .map(|(k, v)| EXTRA_OVERHEAD_BYTES + k.len() as u64 + v.len() as u64)
            .sum();
        HEADER_BYTES + tensors + extras
    }
}

/// Serializes `ckpt` into `sink`, returning the byte count (equal to
/// [`Checkpoint::total_size`]). The checkpoint is validated first.
pub fn write_checkpoint<W: Write>(ckpt: &Checkpoint, sink: &mut W) -> Result<u64, ContainerError> {
    ckpt.validate()?;
    let io_err = |e: std::io::Error| ContainerError::Format(format!("write failed: {e}"));
    let mut written: u64 = 0;
    let put = |sink: &mut W, bytes: &[u8]| sink.write_all(bytes).map(|()| bytes.len() as u64);

    written += put(sink, &MAGIC).map_err(io_err)?;
    written += put(sink, &ckpt.version.to_le_bytes()).map_err(io_err)?;
    written += put(sink, &(ckpt.tensors.len() as u32).to_le_bytes()).map_err(io_err)?;
    written += put(sink, &(ckpt.extras.len() as u32).to_le_bytes()).map_err(io_err)?;
    for t in &ckpt.tensors {
        written += put(sink, &(t.name.len() as u16).to_le_bytes()).map_err(io_err)?;
        written += put(sink, t.name.as_bytes()).map_err(io_err)?;
        written += put(sink, &(t.shape.len() as u8).to_le_bytes()).map_err(io_err)?;
        for &d in &t.shape {
            written += put(sink, &d.to_le_bytes()).map_err(io_err)?;
        }
        written += put(sink, &(4 * t.data.len() as u64).to_le_bytes()).map_err(io_err)?;
        // One bulk buffer per tensor keeps syscall counts sane for file sinks.
        let mut payload = Vec::with_capacity(4 * t.data.len());
        for v in &t.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        written += put(sink, &payload).map_err(io_err)?;
    }
    for (k, v) in &ckpt.extras {
        written += put(sink, &(k.len() as u16).to_le_bytes()).map_err(io_err)?;
        written += put(sink, k.as_bytes()).map_err(io_err)?;
        written += put(sink, &(v.len() as u64).to_le_bytes()).map_err(io_err)?;
        written += put(sink, v).map_err(io_err)?;
    }
    debug_assert_eq!(written, ckpt.total_size());
    Ok(written)
}

/// Convenience wrapper over [`write_checkpoint`].
pub fn checkpoint_to_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>, ContainerError> {
    let mut out = Vec::with_capacity(ckpt.total_size() as usize);
    write_checkpoint(ckpt, &mut out)?;
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], ContainerError> {
        if self.remaining() < n {
            return Err(ContainerError::Format(format!(
                "truncated while reading {what}: need {n} bytes, {} left at offset {}",
                self.remaining(),
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16, ContainerError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, ContainerError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, len: usize, what: &str) -> Result<String, ContainerError> {
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| ContainerError::Format(format!("{what} is not valid UTF-8")))
    }
}

/// Parses a canonical MTC v1 byte stream. Never panics and never allocates
/// more than the input length, whatever `bytes` contains.
pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint, ContainerError> {
    let fail = |msg: String| ContainerError::Format(msg);
    let mut r = Reader { buf: bytes, pos: 0 };

    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(fail(format!("bad magic {magic:02x?}, expected \"MTC1\"")));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let tensor_count = r.u32("tensor count")? as usize;
    let extras_count = r.u32("extras count")? as usize;

    // Cheapest possible representation of a tensor entry is 11 bytes, of an
    // extras entry 10; reject impossible counts before reserving anything.
    let min_needed = tensor_count
        .checked_mul(TENSOR_OVERHEAD_BYTES as usize)
        .zip(extras_count.checked_mul(EXTRA_OVERHEAD_BYTES as usize))
        .and_then(|(t, e)| t.checked_add(e));
    match min_needed {
        Some(n) if n <= r.remaining() => {}
        _ => {
            return Err(fail(format!(
                "declared {tensor_count} tensors / {extras_count} extras cannot fit in {} remaining bytes",
                r.remaining()
            )))
        }
    }

    let mut tensors = Vec::with_capacity(tensor_count);
    let mut names = HashSet::new();
    for i in 0..tensor_count {
        let name_len = r.u16(&format!("tensor {i} name length"))? as usize;
        let name = r.string(name_len, &format!("tensor {i} name"))?;
        if name.is_empty() {
            return Err(fail(format!("tensor {i} has an empty name")));
        }
        if !names.insert(name.clone()) {
            return Err(fail(format!("duplicate tensor name '{name}'")));
        }
        let rank = r.take(1, &format!("tensor '{name}' rank"))?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        let mut product: u64 = 1;
        for d in 0..rank {
            let dim = r.u32(&format!("tensor '{name}' dim {d}"))?;
            if dim == 0 {
                return Err(fail(format!("tensor '{name}' has a zero dim")));
            }
            product = product
                .checked_mul(dim as u64)
                .filter(|p| p.checked_mul(4).is_some())
                .ok_or_else(|| fail(format!("tensor '{name}' shape product overflows")))?;
            shape.push(dim);
        }
        let payload_len = r.u64(&format!("tensor '{name}' payload length"))?;
        if payload_len != product * 4 {
            return Err(fail(format!(
                "tensor '{name}' declares payload {payload_len} B but shape needs {} B",
                product * 4
            )));
        }
        if payload_len > r.remaining() as u64 {
            return Err(fail(format!(
                "truncated in tensor '{name}': payload needs {payload_len} B, {} left",
                r.remaining()
            )));
        }
        let raw = r.take(payload_len as usize, &format!("tensor '{name}' payload"))?;
        let mut data = Vec::with_capacity(product as usize);
        for (j, chunk) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(fail(format!(
                    "tensor '{name}' has a non-finite value at index {j}"
                )));
            }
            data.push(v);
        }
        tensors.push(TensorEntry { name, shape, data });
    }

    let mut extras = Vec::with_capacity(extras_count);
    let mut keys = HashSet::new();
    for i in 0..extras_count {
        let key_len = r.u16(&format!("extras {i} key length"))? as usize;
        let key = r.string(key_len, &format!("extras {i} key"))?;
        if !keys.insert(key.clone()) {
            return Err(fail(format!("duplicate extras key '{key}'")));
        }
        let value_len = r.u64(&format!("extras '{key}' value length"))?;
        if value_len > r.remaining() as u64 {
            return Err(fail(format!(
                "truncated in extras '{key}': value needs {value_len} B, {} left",
                r.remaining()
            )));
        }
        let value = r
            .take(value_len as usize, &format!("extras '{key}' value"))?
            .to_vec();
        extras.push((key, value));
    }

    if r.remaining() != 0 {
        return Err(fail(format!(
            "{} trailing bytes after checkpoint body",
            r.remaining()
        )));
    }
    Ok(Checkpoint {
        version,
        tensors,
        extras,
    })
}
