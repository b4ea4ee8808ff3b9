//! Block-matching delta codec.
//!
//! The old payload is cut into fixed-size blocks indexed by a rolling
//! checksum. The new payload is scanned with a window of the same size; a
//! checksum hit that also compares equal byte-for-byte becomes a COPY that is
//! then extended in both directions. Everything else is sent as INSERT.
//!
//! Wire format, all integers little-endian:
//!
//! ```text
//! header   magic "EDLT" | version u16 | old digest [u8; 32] (SHA-256)
//!          | block size u32 | op count u32
//! op       0x01 COPY   offset u64 | len u32
//!          0x02 INSERT len u32 | bytes
//! ```

use std::collections::HashMap;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"EDLT";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 32 + 4 + 4;
pub const COPY_OP_LEN: usize = 1 + 8 + 4;
pub const INSERT_OP_OVERHEAD: usize = 1 + 4;
/// Upper bound on `encoded_len - new.len()` for any delta.
pub const MAX_OVERHEAD: usize = HEADER_LEN + COPY_OP_LEN;

const OP_COPY: u8 = 0x01;
const OP_INSERT: u8 = 0x02;
const MIN_BLOCK: usize = 32;
const MAX_BLOCK: usize = 2048;
/// Shorter matches cost more as COPY ops than as literal bytes.
const MIN_MATCH: usize = 32;

pub type Digest32 = [u8; 32];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("delta was computed against a different base (digest mismatch)")]
    DigestMismatch,
    #[error("malformed delta: {0}")]
    Malformed(&'static str),
    #[error("COPY range {offset}+{len} exceeds base length {base_len}")]
    CopyOutOfRange { offset: u64, len: u32, base_len: usize },
}

pub fn digest(data: &[u8]) -> Digest32 {
    Sha256::digest(data).into()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DeltaOp {
    Copy { offset: u64, len: u32 },
    Insert(Vec<u8>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delta {
    pub old_digest: Digest32,
    pub block_size: u32,
    pub ops: Vec<DeltaOp>,
}

impl Delta {
    /// Bytes carried as literals.
    pub fn literal_len(&self) -> usize {
        self.ops
            .iter()
            .map(|op| match op {
                DeltaOp::Insert(b) => b.len(),
                DeltaOp::Copy { .. } => 0,
            })
            .sum()
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN
            + self
                .ops
                .iter()
                .map(|op| match op {
                    DeltaOp::Copy { .. } => COPY_OP_LEN,
                    DeltaOp::Insert(b) => INSERT_OP_OVERHEAD + b.len(),
                })
                .sum::<usize>()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.old_digest);
        out.extend_from_slice(&self.block_size.to_le_bytes());
        out.extend_from_slice(&(self.ops.len() as u32).to_le_bytes());
        for op in &self.ops {
            match op {
                DeltaOp::Copy { offset, len } => {
                    out.push(OP_COPY);
                    out.extend_from_slice(&offset.to_le_bytes());
                    out.extend_from_slice(&len.to_le_bytes());
                }
                DeltaOp::Insert(bytes) => {
                    out.push(OP_INSERT);
                    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
                    out.extend_from_slice(bytes);
                }
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Delta, CodecError> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(CodecError::Malformed("bad magic"));
        }
        if r.u16()? != FORMAT_VERSION {
            return Err(CodecError::Malformed("unsupported version"));
        }
        let old_digest: Digest32 = r.take(32)?.try_into().expect("32 bytes");
        let block_size = r.u32()?;
        let count = r.u32()? as usize;
        let mut ops = Vec::with_capacity(count.min(buf.len()));
        for _ in 0..count {
            match r.take(1)?[0] {
                OP_COPY => {
                    let offset = r.u64()?;
                    let len = r.u32()?;
                    ops.push(DeltaOp::Copy { offset, len });
                }
                OP_INSERT => {
                    let len = r.u32()? as usize;
                    ops.push(DeltaOp::Insert(r.take(len)?.to_vec()));
                }
                _ => return Err(CodecError::Malformed("unknown op")),
            }
        }
        if r.pos != buf.len() {
            return Err(CodecError::Malformed("trailing bytes"));
        }
        Ok(Delta { old_digest, block_size, ops })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(CodecError::Malformed("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// rsync-style two-part checksum over a window.
#[derive(Clone, Copy)]
struct RollSum {
    a: u32,
    b: u32,
    len: u32,
}

impl RollSum {
    fn new(window: &[u8]) -> Self {
        let mut a = 0u32;
        let mut b = 0u32;
        let n = window.len() as u32;
        for (i, &x) in window.iter().enumerate() {
            a = a.wrapping_add(x as u32);
            b = b.wrapping_add((n - i as u32).wrapping_mul(x as u32));
        }
        RollSum { a, b, len: n }
    }

    fn roll(&mut self, out: u8, inc: u8) {
        self.a = self.a.wrapping_sub(out as u32).wrapping_add(inc as u32);
        self.b = self.b.wrapping_sub(self.len.wrapping_mul(out as u32)).wrapping_add(self.a);
    }

    fn value(&self) -> u32 {
        (self.a & 0xffff) | (self.b << 16)
    }
}

fn block_size_for(len: usize) -> usize {
    ((len as f64).sqrt() as usize).clamp(MIN_BLOCK, MAX_BLOCK)
}

struct OpBuilder {
    ops: Vec<DeltaOp>,
}

impl OpBuilder {
    fn literal(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(u32::MAX as usize) {
            if chunk.is_empty() {
                continue;
            }
            match self.ops.last_mut() {
                Some(DeltaOp::Insert(buf)) if buf.len() + chunk.len() <= u32::MAX as usize => buf.extend_from_slice(chunk),
                _ => self.ops.push(DeltaOp::Insert(chunk.to_vec())),
            }
        }
    }

    fn copy(&mut self, mut offset: u64, mut len: usize) {
        while len > 0 {
            if let Some(DeltaOp::Copy { offset: o, len: l }) = self.ops.last_mut() {
                if *o + *l as u64 == offset && (*l as usize) < u32::MAX as usize {
                    let add = len.min(u32::MAX as usize - *l as usize);
                    *l += add as u32;
                    offset += add as u64;
                    len -= add;
                    continue;
                }
            }
            let take = len.min(u32::MAX as usize);
            self.ops.push(DeltaOp::Copy { offset, len: take as u32 });
            offset += take as u64;
            len -= take;
        }
    }
}

/// Computes a delta that turns `old` into `new`.
pub fn diff_encode(old: &[u8], new: &[u8]) -> Delta {
    let block = block_size_for(old.len());
    let mut b = OpBuilder { ops: Vec::new() };
    let old_digest = digest(old);
    if old == new {
        b.copy(0, new.len());
        return Delta { old_digest, block_size: block as u32, ops: b.ops };
    }

    // Common prefix and suffix come for free.
    let prefix = old.iter().zip(new).take_while(|(x, y)| x == y).count();
    let max_suffix = old.len().min(new.len()) - prefix;
    let suffix = old.iter().rev().zip(new.iter().rev()).take(max_suffix).take_while(|(x, y)| x == y).count();
    let (prefix, suffix) = (
        if prefix >= MIN_MATCH { prefix } else { 0 },
        if suffix >= MIN_MATCH { suffix } else { 0 },
    );
    if prefix > 0 {
        b.copy(0, prefix);
    }
    let mid_new = &new[prefix..new.len() - suffix];

    let mut index: HashMap<u32, Vec<usize>> = HashMap::new();
    let mut off = 0;
    while off + block <= old.len() {
        index.entry(RollSum::new(&old[off..off + block]).value()).or_default().push(off);
        off += block;
    }

    let mut lit_start = 0;
    let mut i = 0;
    let mut sum = (mid_new.len() >= block).then(|| RollSum::new(&mid_new[..block]));
    while let Some(s) = sum.as_mut() {
        let hit = index.get(&s.value()).and_then(|offs| {
            offs.iter().copied().find(|&o| old[o..o + block] == mid_new[i..i + block])
        });
        if let Some(mut o) = hit {
            let mut start = i;
            // Extend backwards into pending literals.
            while start > lit_start && o > 0 && old[o - 1] == mid_new[start - 1] {
                start -= 1;
                o -= 1;
            }
            let mut len = i + block - start;
            while start + len < mid_new.len() && o + len < old.len() && old[o + len] == mid_new[start + len] {
                len += 1;
            }
            b.literal(&mid_new[lit_start..start]);
            b.copy(o as u64, len);
            i = start + len;
            lit_start = i;
            sum = (i + block <= mid_new.len()).then(|| RollSum::new(&mid_new[i..i + block]));
        } else if i + block < mid_new.len() {
            s.roll(mid_new[i], mid_new[i + block]);
            i += 1;
        } else {
            sum = None;
        }
    }
    b.literal(&mid_new[lit_start..]);
    if suffix > 0 {
        b.copy((old.len() - suffix) as u64, suffix);
    }
    Delta { old_digest, block_size: block as u32, ops: b.ops }
}

/// Rebuilds the new payload from `old` and a delta computed against it.
pub fn diff_apply(old: &[u8], delta: &Delta) -> Result<Vec<u8>, CodecError> {
    if digest(old) != delta.old_digest {
        return Err(CodecError::DigestMismatch);
    }
    let mut out = Vec::new();
    for op in &delta.ops {
        match op {
            DeltaOp::Copy { offset, len } => {
                let start = usize::try_from(*offset).ok().filter(|&s| s <= old.len());
                let range = start.and_then(|s| s.checked_add(*len as usize).filter(|&e| e <= old.len()).map(|e| s..e));
                let range = range.ok_or(CodecError::CopyOutOfRange { offset: *offset, len: *len, base_len: old.len() })?;
                out.extend_from_slice(&old[range]);
            }
            DeltaOp::Insert(bytes) => out.extend_from_slice(bytes),
        }
    }
    Ok(out)
}

/// [`diff_apply`] over the wire encoding.
pub fn diff_apply_bytes(old: &[u8], delta: &[u8]) -> Result<Vec<u8>, CodecError> {
    diff_apply(old, &Delta::from_bytes(delta)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unchanged_payload_has_no_literals() {
        for payload in [&b""[..], b"x", b"AAAABBBB", &[7u8; 5000]] {
            let d = diff_encode(payload, payload);
            assert_eq!(d.literal_len(), 0);
            assert_eq!(diff_apply(payload, &d).unwrap(), payload);
        }
    }

    #[test]
    fn small_edit_round_trips() {
        let d = diff_encode(b"AAAABBBB", b"AAAACCCC");
        assert_eq!(diff_apply(b"AAAABBBB", &d).unwrap(), b"AAAACCCC");
    }

    #[test]
    fn first_sync_is_roughly_the_payload() {
        let new: Vec<u8> = (0..10_000u32).map(|i| (i * 31 % 251) as u8).collect();
        let d = diff_encode(b"", &new);
        assert_eq!(d.literal_len(), new.len());
        assert!(d.encoded_len() <= new.len() + MAX_OVERHEAD);
    }

    #[test]
    fn shifted_content_is_found() {
        let old: Vec<u8> = (0..50_000u32).map(|i| (i.wrapping_mul(2_654_435_761) >> 13) as u8).collect();
        let mut new = b"inserted at the front".to_vec();
        new.extend_from_slice(&old);
        let d = diff_encode(&old, &new);
        assert!(d.literal_len() < 100, "literal {}", d.literal_len());
        assert_eq!(diff_apply(&old, &d).unwrap(), new);
    }

    #[test]
    fn wrong_base_is_rejected() {
        let d = diff_encode(b"version one of the object payload!", b"version two");
        assert_eq!(diff_apply(b"something else", &d), Err(CodecError::DigestMismatch));
    }

    #[test]
    fn wire_format_round_trips_and_rejects_garbage() {
        let d = diff_encode(&[1u8; 300], &[[1u8; 200].as_slice(), b"tail"].concat());
        let bytes = d.to_bytes();
        assert_eq!(bytes.len(), d.encoded_len());
        assert_eq!(&bytes[..4], b"EDLT");
        assert_eq!(Delta::from_bytes(&bytes).unwrap(), d);
        assert!(Delta::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Delta::from_bytes(b"nope").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_and_size_bound(old in proptest::collection::vec(any::<u8>(), 0..4096),
                                     edits in proptest::collection::vec((any::<u16>(), any::<u8>()), 0..16),
                                     cut in any::<u16>()) {
            let mut new = old.clone();
            for (pos, byte) in edits {
                if new.is_empty() { new.push(byte); continue; }
                let p = pos as usize % new.len();
                new[p] = byte;
            }
            new.truncate(new.len().saturating_sub(cut as usize % 64));
            let d = diff_encode(&old, &new);
            prop_assert!(d.encoded_len() <= new.len() + MAX_OVERHEAD);
            prop_assert_eq!(diff_apply_bytes(&old, &d.to_bytes()).unwrap(), new);
        }
    }
}
