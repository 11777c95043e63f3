//! TCK tractogram format.
//!
//! Text header starting `mrtrix tracks`, `key: value` lines, mandatory
//! `datatype: Float32LE` and `file: . <offset>`, terminated by `END`. The
//! payload at the byte offset is a stream of float32 LE (x, y, z) triplets:
//! each streamline is followed by a (NaN, NaN, NaN) separator and the stream
//! ends with a (+inf, +inf, +inf) terminator.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::streamline::{Streamline, Tractogram};

/// Serializes with `count:` populated and the payload offset pointing just
/// past the END line.
pub fn write_tck_bytes(tractogram: &Tractogram) -> Vec<u8> {
    let render = |offset: usize| {
        format!(
            "mrtrix tracks\ncount: {}\ndatatype: Float32LE\nfile: . {}\nEND\n",
            tractogram.len(),
            offset
        )
    };
    // The offset appears inside the header, so iterate to the fixpoint.
    let mut offset = render(0).len();
    loop {
        let len = render(offset).len();
        if len == offset {
            break;
        }
        offset = len;
    }
    let header = render(offset);

    let mut out = Vec::with_capacity(header.len() + tractogram.len() * 64);
    out.extend_from_slice(header.as_bytes());
    let mut push = |x: f32, y: f32, z: f32| {
        out.extend_from_slice(&x.to_le_bytes());
        out.extend_from_slice(&y.to_le_bytes());
        out.extend_from_slice(&z.to_le_bytes());
    };
    for s in tractogram.iter() {
        for p in s.points() {
            push(p[0] as f32, p[1] as f32, p[2] as f32);
        }
        push(f32::NAN, f32::NAN, f32::NAN);
    }
    push(f32::INFINITY, f32::INFINITY, f32::INFINITY);
    out
}

pub fn write_tck(tractogram: &Tractogram, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_tck_bytes(tractogram))?;
    Ok(())
}

pub fn read_tck(path: impl AsRef<Path>) -> Result<Tractogram> {
    read_tck_bytes(&fs::read(path)?)
}

pub fn read_tck_bytes(bytes: &[u8]) -> Result<Tractogram> {
    // -- header ---------------------------------------------------------
    let mut pos = 0usize;
    let mut first = true;
    let mut datatype: Option<(String, usize)> = None;
    let mut file_offset: Option<u64> = None;
    let mut saw_end = false;
    while pos < bytes.len() {
        let line_start = pos;
        let rel_end = bytes[pos..].iter().position(|&b| b == b'\n');
        let line_end = match rel_end {
            Some(r) => pos + r,
            None => bytes.len(),
        };
        let line = std::str::from_utf8(&bytes[line_start..line_end])
            .map_err(|_| Error::parse(line_start as u64, "header is not UTF-8"))?
            .trim_end_matches('\r');
        pos = line_end + 1;

        if first {
            if line != "mrtrix tracks" {
                return Err(Error::parse(0, format!("bad magic line {line:?}")));
            }
            first = false;
            continue;
        }
        if line == "END" {
            saw_end = true;
            break;
        }
        if let Some((key, value)) = line.split_once(':') {
            let key = key.trim();
            let value = value.trim();
            match key {
                "datatype" => datatype = Some((value.to_string(), line_start)),
                "file" => {
                    let mut parts = value.split_whitespace();
                    let fname = parts.next().unwrap_or("");
                    if fname != "." {
                        return Err(Error::parse(
                            line_start as u64,
                            format!("external payload file {fname:?} not supported"),
                        ));
                    }
                    let off = parts.next().ok_or_else(|| {
                        Error::parse(line_start as u64, "file line missing offset")
                    })?;
                    file_offset = Some(off.parse().map_err(|_| {
                        Error::parse(line_start as u64, format!("bad offset {off:?}"))
                    })?);
                }
                _ => {} // other keys (count, timestamps, ...) pass through
            }
        }
    }
    if !saw_end {
        return Err(Error::parse(bytes.len() as u64, "missing END line"));
    }
    match datatype {
        Some((ref d, _)) if d == "Float32LE" => {}
        Some((d, at)) => {
            return Err(Error::parse(
                at as u64,
                format!("unsupported datatype {d:?}, expected Float32LE"),
            ))
        }
        None => return Err(Error::parse(pos as u64, "missing datatype")),
    }
    let offset =
        file_offset.ok_or_else(|| Error::parse(pos as u64, "missing file offset"))? as usize;
    if offset < pos || offset > bytes.len() {
        return Err(Error::parse(
            offset as u64,
            format!("payload offset {offset} outside file of {} bytes", bytes.len()),
        ));
    }

    // -- payload --------------------------------------------------------
    let mut cursor = offset;
    let mut streamlines = Vec::new();
    let mut current: Vec<[f64; 3]> = Vec::new();
    loop {
        if cursor + 12 > bytes.len() {
            return Err(Error::parse(
                cursor as u64,
                "truncated payload: no terminator",
            ));
        }
        let mut triplet = [0f32; 3];
        for (i, t) in triplet.iter_mut().enumerate() {
            let s = cursor + 4 * i;
            *t = f32::from_le_bytes(bytes[s..s + 4].try_into().unwrap());
        }
        let nan_count = triplet.iter().filter(|v| v.is_nan()).count();
        let inf_count = triplet.iter().filter(|v| v.is_infinite() && **v > 0.0).count();
        if nan_count == 3 {
            let s = Streamline::with_id(std::mem::take(&mut current), streamlines.len() as u64)
                .map_err(|e| Error::parse(cursor as u64, format!("invalid streamline: {e}")))?;
            streamlines.push(s);
        } else if inf_count == 3 {
            if !current.is_empty() {
                let s =
                    Streamline::with_id(std::mem::take(&mut current), streamlines.len() as u64)
                        .map_err(|e| {
                            Error::parse(cursor as u64, format!("invalid streamline: {e}"))
                        })?;
                streamlines.push(s);
            }
            break;
        } else if nan_count > 0 || inf_count > 0 || !triplet.iter().all(|v| v.is_finite()) {
            return Err(Error::parse(
                cursor as u64,
                format!("non-finite coordinate triplet {triplet:?}"),
            ));
        } else {
            current.push([triplet[0] as f64, triplet[1] as f64, triplet[2] as f64]);
        }
        cursor += 12;
    }
    Ok(Tractogram::new(streamlines))
}
