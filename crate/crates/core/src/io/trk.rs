//! TRK (TrackVis) tractogram format.
//!
//! 1000-byte little-endian header, then per streamline: an int32 point
//! count, `count x (3 + n_scalars)` float32 (coordinates interleaved with
//! per-point scalars), then `n_properties` float32. Coordinates are kept in
//! voxmm (voxel-size-scaled millimeters) at the io boundary; conversion to
//! world space is explicit via [`trk_to_world`] because the half-voxel
//! origin convention differs across ecosystem tools.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::streamline::{Point, Streamline, Tractogram};

pub const TRK_HEADER_SIZE: usize = 1000;

/// The full on-disk header. Reserved/padding regions are carried opaquely so
/// read-then-write reproduces foreign files byte for byte.
#[derive(Debug, Clone, PartialEq)]
pub struct TrkHeader {
    pub id_string: [u8; 6],
    pub dim: [i16; 3],
    pub voxel_size: [f32; 3],
    pub origin: [f32; 3],
    pub n_scalars: i16,
    pub scalar_names: [u8; 200],
    pub n_properties: i16,
    pub property_names: [u8; 200],
    pub vox_to_ras: [[f32; 4]; 4],
    pub reserved: [u8; 444],
    pub voxel_order: [u8; 4],
    pub pad2: [u8; 4],
    pub image_orientation_patient: [f32; 6],
    pub pad1: [u8; 2],
    pub invert_x: u8,
    pub invert_y: u8,
    pub invert_z: u8,
    pub swap_xy: u8,
    pub swap_yz: u8,
    pub swap_zx: u8,
    pub n_count: i32,
    pub version: i32,
    pub hdr_size: i32,
}

impl TrkHeader {
    /// A minimal valid version-2 header with identity vox_to_ras.
    pub fn new(dim: [i16; 3], voxel_size: [f32; 3]) -> TrkHeader {
        let mut vox_to_ras = [[0.0f32; 4]; 4];
        for (i, row) in vox_to_ras.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        TrkHeader {
            id_string: *b"TRACK\0",
            dim,
            voxel_size,
            origin: [0.0; 3],
            n_scalars: 0,
            scalar_names: [0; 200],
            n_properties: 0,
            property_names: [0; 200],
            vox_to_ras,
            reserved: [0; 444],
            voxel_order: *b"RAS\0",
            pad2: [0; 4],
            image_orientation_patient: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            pad1: [0; 2],
            invert_x: 0,
            invert_y: 0,
            invert_z: 0,
            swap_xy: 0,
            swap_yz: 0,
            swap_zx: 0,
            n_count: 0,
            version: 2,
            hdr_size: TRK_HEADER_SIZE as i32,
        }
    }

    fn to_bytes(&self) -> [u8; TRK_HEADER_SIZE] {
        let mut out = [0u8; TRK_HEADER_SIZE];
        let mut w = Writer { buf: &mut out, pos: 0 };
        w.bytes(&self.id_string);
        for v in self.dim {
            w.i16(v);
        }
        for v in self.voxel_size {
            w.f32(v);
        }
        for v in self.origin {
            w.f32(v);
        }
        w.i16(self.n_scalars);
        w.bytes(&self.scalar_names);
        w.i16(self.n_properties);
        w.bytes(&self.property_names);
        for row in self.vox_to_ras {
            for v in row {
                w.f32(v);
            }
        }
        w.bytes(&self.reserved);
        w.bytes(&self.voxel_order);
        w.bytes(&self.pad2);
        for v in self.image_orientation_patient {
            w.f32(v);
        }
        w.bytes(&self.pad1);
        w.bytes(&[
            self.invert_x,
            self.invert_y,
            self.invert_z,
            self.swap_xy,
            self.swap_yz,
            self.swap_zx,
        ]);
        w.i32(self.n_count);
        w.i32(self.version);
        w.i32(self.hdr_size);
        debug_assert_eq!(w.pos, TRK_HEADER_SIZE);
        out
    }

    fn from_bytes(bytes: &[u8]) -> Result<TrkHeader> {
        if bytes.len() < TRK_HEADER_SIZE {
            return Err(Error::parse(
                bytes.len() as u64,
                format!("file too short for a {TRK_HEADER_SIZE}-byte header"),
            ));
        }
        let mut r = Reader { buf: bytes, pos: 0 };
        let header = TrkHeader {
            id_string: r.array::<6>(),
            dim: [r.i16(), r.i16(), r.i16()],
            voxel_size: [r.f32(), r.f32(), r.f32()],
            origin: [r.f32(), r.f32(), r.f32()],
            n_scalars: r.i16(),
            scalar_names: r.array::<200>(),
            n_properties: r.i16(),
            property_names: r.array::<200>(),
            vox_to_ras: {
                let mut m = [[0.0f32; 4]; 4];
                for row in &mut m {
                    for v in row.iter_mut() {
                        *v = r.f32();
                    }
                }
                m
            },
            reserved: r.array::<444>(),
            voxel_order: r.array::<4>(),
            pad2: r.array::<4>(),
            image_orientation_patient: {
                let mut a = [0.0f32; 6];
                for v in &mut a {
                    *v = r.f32();
                }
                a
            },
            pad1: r.array::<2>(),
            invert_x: r.u8(),
            invert_y: r.u8(),
            invert_z: r.u8(),
            swap_xy: r.u8(),
            swap_yz: r.u8(),
            swap_zx: r.u8(),
            n_count: r.i32(),
            version: r.i32(),
            hdr_size: r.i32(),
        };
        debug_assert_eq!(r.pos, TRK_HEADER_SIZE);

        if &header.id_string[..5] != b"TRACK" {
            return Err(Error::parse(0, "bad magic: expected TRACK"));
        }
        if header.hdr_size != TRK_HEADER_SIZE as i32 {
            // A byte-swapped 1000 signals a big-endian file.
            if header.hdr_size.swap_bytes() == TRK_HEADER_SIZE as i32 {
                return Err(Error::UnsupportedHeader(
                    "big-endian TRK files are not supported".into(),
                ));
            }
            return Err(Error::parse(
                996,
                format!("hdr_size {} != {TRK_HEADER_SIZE}", header.hdr_size),
            ));
        }
        if !(1..=2).contains(&header.version) {
            return Err(Error::UnsupportedHeader(format!(
                "TRK version {} (supported: 1, 2)",
                header.version
            )));
        }
        if !(0..=10).contains(&header.n_scalars) || !(0..=10).contains(&header.n_properties) {
            return Err(Error::parse(
                36,
                format!(
                    "n_scalars {} / n_properties {} outside 0..=10",
                    header.n_scalars, header.n_properties
                ),
            ));
        }
        Ok(header)
    }
}

/// A parsed TRK file: tractogram in voxmm plus opaque per-point scalars and
/// per-streamline properties, preserved through round trips.
#[derive(Debug, Clone, PartialEq)]
pub struct TrkFile {
    pub header: TrkHeader,
    pub tractogram: Tractogram,
    /// Per streamline: `point_count * n_scalars` values, point-major.
    pub scalars: Vec<Vec<f32>>,
    /// Per streamline: `n_properties` values.
    pub properties: Vec<Vec<f32>>,
}

impl TrkFile {
    /// Wraps a plain tractogram (no scalars or properties); `n_count` is
    /// populated from the tractogram.
    pub fn new(tractogram: Tractogram, mut header: TrkHeader) -> TrkFile {
        header.n_count = tractogram.len() as i32;
        header.n_scalars = 0;
        header.n_properties = 0;
        let n = tractogram.len();
        TrkFile {
            header,
            tractogram,
            scalars: vec![Vec::new(); n],
            properties: vec![Vec::new(); n],
        }
    }
}

pub fn write_trk_bytes(file: &TrkFile) -> Result<Vec<u8>> {
    let n = file.tractogram.len();
    if file.header.n_count != 0 && file.header.n_count as usize != n {
        return Err(Error::InvalidArgument(format!(
            "header n_count {} but {} streamlines",
            file.header.n_count, n
        )));
    }
    if file.scalars.len() != n || file.properties.len() != n {
        return Err(Error::InvalidArgument(
            "scalars/properties length mismatch".into(),
        ));
    }
    let ns = file.header.n_scalars as usize;
    let np = file.header.n_properties as usize;
    let mut out = Vec::with_capacity(TRK_HEADER_SIZE + n * 64);
    out.extend_from_slice(&file.header.to_bytes());
    for (i, s) in file.tractogram.iter().enumerate() {
        let pts = s.points();
        if file.scalars[i].len() != pts.len() * ns {
            return Err(Error::InvalidArgument(format!(
                "streamline {i}: {} scalars for {} points x {ns}",
                file.scalars[i].len(),
                pts.len()
            )));
        }
        if file.properties[i].len() != np {
            return Err(Error::InvalidArgument(format!(
                "streamline {i}: {} properties, header says {np}",
                file.properties[i].len()
            )));
        }
        out.extend_from_slice(&(pts.len() as i32).to_le_bytes());
        for (k, p) in pts.iter().enumerate() {
            for c in p {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
            for v in &file.scalars[i][k * ns..(k + 1) * ns] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for v in &file.properties[i] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_trk(file: &TrkFile, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_trk_bytes(file)?)?;
    Ok(())
}

pub fn read_trk(path: impl AsRef<Path>) -> Result<TrkFile> {
    read_trk_bytes(&fs::read(path)?)
}

pub fn read_trk_bytes(bytes: &[u8]) -> Result<TrkFile> {
    let header = TrkHeader::from_bytes(bytes)?;
    let ns = header.n_scalars as usize;
    let np = header.n_properties as usize;
    let mut pos = TRK_HEADER_SIZE;
    let mut streamlines = Vec::new();
    let mut scalars = Vec::new();
    let mut properties = Vec::new();
    // n_count == 0 means unknown: read to EOF.
    let expected = if header.n_count > 0 {
        Some(header.n_count as usize)
    } else {
        None
    };
    while pos < bytes.len() {
        if let Some(e) = expected {
            if streamlines.len() == e {
                break; // trailing bytes beyond the declared count are left alone
            }
        }
        if pos + 4 > bytes.len() {
            return Err(Error::parse(pos as u64, "truncated streamline header"));
        }
        let npts = i32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
        pos += 4;
        if npts < 2 {
            return Err(Error::parse(
                (pos - 4) as u64,
                format!("streamline {} has {npts} points (need >= 2)", streamlines.len()),
            ));
        }
        let npts = npts as usize;
        // Bounds-check the declared size against the remaining file before
        // allocating anything proportional to it.
        let body = npts
            .checked_mul(3 + ns)
            .and_then(|v| v.checked_mul(4))
            .and_then(|v| v.checked_add(np * 4))
            .ok_or_else(|| Error::parse(pos as u64, "point count overflow"))?;
        if pos + body > bytes.len() {
            return Err(Error::parse(
                pos as u64,
                format!(
                    "streamline {} declares {npts} points but only {} bytes remain",
                    streamlines.len(),
                    bytes.len() - pos
                ),
            ));
        }
        let mut pts = Vec::with_capacity(npts);
        let mut svals = Vec::with_capacity(npts * ns);
        for _ in 0..npts {
            let mut p = [0f64; 3];
            for c in &mut p {
                *c = f32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as f64;
                pos += 4;
            }
            pts.push(p);
            for _ in 0..ns {
                svals.push(f32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()));
                pos += 4;
            }
        }
        let mut pvals = Vec::with_capacity(np);
        for _ in 0..np {
            pvals.push(f32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()));
            pos += 4;
        }
        let s = Streamline::with_id(pts, streamlines.len() as u64)
            .map_err(|e| Error::parse(pos as u64, format!("invalid streamline: {e}")))?;
        streamlines.push(s);
        scalars.push(svals);
        properties.push(pvals);
    }
    if let Some(e) = expected {
        if streamlines.len() != e {
            return Err(Error::parse(
                pos as u64,
                format!("header declares {e} streamlines, found {}", streamlines.len()),
            ));
        }
    }
    Ok(TrkFile {
        header,
        tractogram: Tractogram::new(streamlines),
        scalars,
        properties,
    })
}

/// Which voxel the voxmm origin sits on. Ecosystem tools disagree; `Center`
/// (nibabel-compatible) is the default, `Corner` leaves integer voxmm
/// coordinates on voxel corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VoxelConvention {
    #[default]
    Center,
    Corner,
}

impl std::str::FromStr for VoxelConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "center" => Ok(VoxelConvention::Center),
            "corner" => Ok(VoxelConvention::Corner),
            other => Err(Error::InvalidArgument(format!(
                "unknown voxel convention {other:?}"
            ))),
        }
    }
}

fn check_world_transform(header: &TrkHeader) -> Result<()> {
    if header.version < 2 {
        return Err(Error::UnsupportedHeader(
            "version-1 TRK has no vox_to_ras matrix".into(),
        ));
    }
    let m = &header.vox_to_ras;
    if m[3][3] == 0.0 {
        return Err(Error::UnsupportedHeader(
            "vox_to_ras not recorded (m[3][3] == 0)".into(),
        ));
    }
    if !m.iter().flatten().all(|v| v.is_finite()) {
        return Err(Error::UnsupportedHeader("non-finite vox_to_ras".into()));
    }
    if header.voxel_size.iter().any(|&v| v == 0.0 || !v.is_finite()) {
        return Err(Error::UnsupportedHeader(format!(
            "bad voxel_size {:?}",
            header.voxel_size
        )));
    }
    if det3(m).abs() < 1e-12 {
        return Err(Error::UnsupportedHeader("singular vox_to_ras".into()));
    }
    Ok(())
}

fn det3(m: &[[f32; 4]; 4]) -> f64 {
    let a = |r: usize, c: usize| m[r][c] as f64;
    a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1))
        - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
        + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0))
}

/// voxmm -> world mm: `p_world = vox_to_ras . (p_voxmm / voxel_size - shift)`
/// where the shift is half a voxel under the `Center` convention and zero
/// under `Corner`.
pub fn trk_to_world(
    points: &[Point],
    header: &TrkHeader,
    convention: VoxelConvention,
) -> Result<Vec<Point>> {
    check_world_transform(header)?;
    let m = &header.vox_to_ras;
    let shift = match convention {
        VoxelConvention::Center => 0.5,
        VoxelConvention::Corner => 0.0,
    };
    let vs = header.voxel_size;
    Ok(points
        .iter()
        .map(|p| {
            let v = [
                p[0] / vs[0] as f64 - shift,
                p[1] / vs[1] as f64 - shift,
                p[2] / vs[2] as f64 - shift,
            ];
            let mut out = [0f64; 3];
            for (r, o) in out.iter_mut().enumerate() {
                *o = m[r][0] as f64 * v[0]
                    + m[r][1] as f64 * v[1]
                    + m[r][2] as f64 * v[2]
                    + m[r][3] as f64;
            }
            out
        })
        .collect())
}

/// Inverse of [`trk_to_world`].
pub fn world_to_trk(
    points: &[Point],
    header: &TrkHeader,
    convention: VoxelConvention,
) -> Result<Vec<Point>> {
    check_world_transform(header)?;
    let m = &header.vox_to_ras;
    // Invert the affine: 3x3 inverse plus translation.
    let det = det3(m);
    let a = |r: usize, c: usize| m[r][c] as f64;
    let inv = [
        [
            (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) / det,
            (a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2)) / det,
            (a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1)) / det,
        ],
        [
            (a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2)) / det,
            (a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0)) / det,
            (a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2)) / det,
        ],
        [
            (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0)) / det,
            (a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1)) / det,
            (a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0)) / det,
        ],
    ];
    let shift = match convention {
        VoxelConvention::Center => 0.5,
        VoxelConvention::Corner => 0.0,
    };
    let vs = header.voxel_size;
    Ok(points
        .iter()
        .map(|p| {
            let t = [p[0] - a(0, 3), p[1] - a(1, 3), p[2] - a(2, 3)];
            let mut v = [0f64; 3];
            for (r, o) in v.iter_mut().enumerate() {
                *o = inv[r][0] * t[0] + inv[r][1] * t[1] + inv[r][2] * t[2];
            }
            [
                (v[0] + shift) * vs[0] as f64,
                (v[1] + shift) * vs[1] as f64,
                (v[2] + shift) * vs[2] as f64,
            ]
        })
        .collect())
}

struct Writer<'a> {
    buf: &'a mut [u8],
    pos: usize,
}

impl Writer<'_> {
    fn bytes(&mut self, b: &[u8]) {
        self.buf[self.pos..self.pos + b.len()].copy_from_slice(b);
        self.pos += b.len();
    }
    fn i16(&mut self, v: i16) {
        self.bytes(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.bytes(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.bytes(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn array<const N: usize>(&mut self) -> [u8; N] {
        let out: [u8; N] = self.buf[self.pos..self.pos + N].try_into().unwrap();
        self.pos += N;
        out
    }
    fn u8(&mut self) -> u8 {
        let v = self.buf[self.pos];
        self.pos += 1;
        v
    }
    fn i16(&mut self) -> i16 {
        let v = i16::from_le_bytes(self.buf[self.pos..self.pos + 2].try_into().unwrap());
        self.pos += 2;
        v
    }
    fn i32(&mut self) -> i32 {
        let v = i32::from_le_bytes(self.buf[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        v
    }
    fn f32(&mut self) -> f32 {
        let v = f32::from_le_bytes(self.buf[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        v
    }
}
