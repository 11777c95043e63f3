//! Versioned binary container for a built search index.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset 0   magic "MNSS" (4 bytes)
//!        4   format version, u32 (currently 1)
//!        8   payload:
//!              k_points      u32
//!              inner         u8   (1, 2, or 255 for inf)
//!              outer         u8
//!              average       u8   (0/1)
//!              policy        u8   (0 direct, 1 direct-flip)
//!              leaf_capacity u32
//!              n             u64   row count
//!              node_count    u64
//!              nodes         node_count x 20 bytes:
//!                              axis u32 (0xFFFF_FFFF marks a leaf)
//!                              split value f64 (0 for leaves)
//!                              left/start u32
//!                              right/len  u32
//!              row_ids       n x u32
//!              rows          n x 3*k_points x f32
//!  trailer    crc32 over the payload, u32
//! ```
//!
//! The loader validates magic, version, total size and checksum before
//! touching the payload; version mismatches are refused.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::index::{Node, SearchIndex};
use crate::norm::{Exponent, NormSpec, OrientationPolicy};

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"MNSS";
pub const SNAPSHOT_VERSION: u32 = 1;

const LEAF_SENTINEL: u32 = u32::MAX;

fn crc32(bytes: &[u8]) -> u32 {
    // CRC-32 (IEEE 802.3), reflected polynomial, table-driven.
    let mut table = [0u32; 256];
    for (i, t) in table.iter_mut().enumerate() {
        let mut c = i as u32;
        for _ in 0..8 {
            c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
        }
        *t = c;
    }
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc = table[((crc ^ b as u32) & 0xFF) as usize] ^ (crc >> 8);
    }
    crc ^ 0xFFFF_FFFF
}

fn encode_exponent(e: Exponent) -> u8 {
    match e {
        Exponent::One => 1,
        Exponent::Two => 2,
        Exponent::Inf => 255,
    }
}

fn decode_exponent(b: u8) -> Result<Exponent> {
    match b {
        1 => Ok(Exponent::One),
        2 => Ok(Exponent::Two),
        255 => Ok(Exponent::Inf),
        other => Err(Error::SnapshotCorrupt(format!("exponent byte {other}"))),
    }
}

pub fn write_index_snapshot(index: &SearchIndex, path: impl AsRef<Path>) -> Result<()> {
    let (rows, nodes, row_ids) = index.raw_parts();
    let mut payload = Vec::with_capacity(32 + nodes.len() * 20 + row_ids.len() * 4 + rows.len() * 4);
    payload.extend_from_slice(&(index.k_points() as u32).to_le_bytes());
    payload.push(encode_exponent(index.spec().inner));
    payload.push(encode_exponent(index.spec().outer));
    payload.push(index.spec().average as u8);
    payload.push(match index.policy() {
        OrientationPolicy::Direct => 0,
        OrientationPolicy::DirectFlip => 1,
    });
    payload.extend_from_slice(&(index.leaf_capacity() as u32).to_le_bytes());
    payload.extend_from_slice(&(index.len() as u64).to_le_bytes());
    payload.extend_from_slice(&(nodes.len() as u64).to_le_bytes());
    for node in nodes {
        match *node {
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                payload.extend_from_slice(&axis.to_le_bytes());
                payload.extend_from_slice(&value.to_le_bytes());
                payload.extend_from_slice(&left.to_le_bytes());
                payload.extend_from_slice(&right.to_le_bytes());
            }
            Node::Leaf { start, len } => {
                payload.extend_from_slice(&LEAF_SENTINEL.to_le_bytes());
                payload.extend_from_slice(&0f64.to_le_bytes());
                payload.extend_from_slice(&start.to_le_bytes());
                payload.extend_from_slice(&len.to_le_bytes());
            }
        }
    }
    for id in row_ids {
        payload.extend_from_slice(&id.to_le_bytes());
    }
    for v in rows {
        payload.extend_from_slice(&v.to_le_bytes());
    }

    let mut out = Vec::with_capacity(payload.len() + 12);
    out.extend_from_slice(&SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32(&payload).to_le_bytes());
    fs::write(path, out)?;
    Ok(())
}

pub fn read_index_snapshot(path: impl AsRef<Path>) -> Result<SearchIndex> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 {
        return Err(Error::SnapshotCorrupt("file shorter than framing".into()));
    }
    if bytes[0..4] != SNAPSHOT_MAGIC {
        return Err(Error::SnapshotCorrupt("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != SNAPSHOT_VERSION {
        return Err(Error::SnapshotCorrupt(format!(
            "format version {version}, expected {SNAPSHOT_VERSION}"
        )));
    }
    let payload = &bytes[8..bytes.len() - 4];
    let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let actual = crc32(payload);
    if stored_crc != actual {
        return Err(Error::SnapshotCorrupt(format!(
            "checksum mismatch: stored {stored_crc:#010x}, computed {actual:#010x}"
        )));
    }

    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > payload.len() {
            return Err(Error::SnapshotCorrupt("payload truncated".into()));
        }
        let s = &payload[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let k_points = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let inner = decode_exponent(take(&mut pos, 1)?[0])?;
    let outer = decode_exponent(take(&mut pos, 1)?[0])?;
    let average = match take(&mut pos, 1)?[0] {
        0 => false,
        1 => true,
        other => return Err(Error::SnapshotCorrupt(format!("average byte {other}"))),
    };
    let policy = match take(&mut pos, 1)?[0] {
        0 => OrientationPolicy::Direct,
        1 => OrientationPolicy::DirectFlip,
        other => return Err(Error::SnapshotCorrupt(format!("policy byte {other}"))),
    };
    let leaf_capacity = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let n = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
    let node_count = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;

    // Bounds-check declared sizes against the actual payload before
    // allocating.
    let expect = node_count
        .checked_mul(20)
        .and_then(|v| v.checked_add(n.checked_mul(4)?))
        .and_then(|v| v.checked_add(n.checked_mul(12 * k_points)?))
        .and_then(|v| v.checked_add(pos))
        .ok_or_else(|| Error::SnapshotCorrupt("size overflow".into()))?;
    if expect != payload.len() {
        return Err(Error::SnapshotCorrupt(format!(
            "declared sizes need {expect} payload bytes, file has {}",
            payload.len()
        )));
    }

    let mut nodes = Vec::with_capacity(node_count);
    for _ in 0..node_count {
        let axis = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        let value = f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        let a = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        let b = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        nodes.push(if axis == LEAF_SENTINEL {
            Node::Leaf { start: a, len: b }
        } else {
            Node::Split {
                axis,
                value,
                left: a,
                right: b,
            }
        });
    }
    let mut row_ids = Vec::with_capacity(n);
    for _ in 0..n {
        row_ids.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()));
    }
    let mut rows = Vec::with_capacity(n * 3 * k_points);
    for _ in 0..n * 3 * k_points {
        rows.push(f32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()));
    }

    SearchIndex::from_raw_parts(
        rows,
        k_points,
        NormSpec::new(inner, outer, average),
        policy,
        leaf_capacity,
        nodes,
        row_ids,
    )
}
