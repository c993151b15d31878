//! Versioned, length-prefixed patch container. One archive per slide.
//!
//! All integers little-endian.
//!
//! ```text
//! header:  magic "IHCPATCH" | version u16 | slide_id_len u16 | slide_id utf-8
//!          | patch_px u32 | target_um_per_px f64 | record_count u64
//! record:  payload_len u32 | anchor_x u32 | anchor_y u32
//!          | tissue_fraction f64 | pixels [u8; patch_px * patch_px * 3]
//! ```

use std::io::{self, Read, Write};

use super::TileError;

pub const ARCHIVE_MAGIC: [u8; 8] = *b"IHCPATCH";
pub const ARCHIVE_VERSION: u16 = 1;

const RECORD_FIXED: usize = 4 + 4 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveHeader {
    pub version: u16,
    pub slide_id: String,
    pub patch_px: u32,
    pub target_um_per_px: f64,
    pub record_count: u64,
}

impl ArchiveHeader {
    fn payload_len(&self) -> usize {
        RECORD_FIXED + self.pixel_len()
    }

    fn pixel_len(&self) -> usize {
        self.patch_px as usize * self.patch_px as usize * 3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord {
    pub slide_id: String,
    pub anchor: (u32, u32),
    pub patch_px: u32,
    pub target_um_per_px: f64,
    pub tissue_fraction: f64,
    pub pixels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchArchive {
    pub header: ArchiveHeader,
    pub records: Vec<PatchRecord>,
}

fn fmt_err(msg: impl Into<String>) -> TileError {
    TileError::Format(msg.into())
}

/// Streams records after a header whose count is fixed up front.
pub struct ArchiveWriter<W: Write> {
    inner: W,
    header: ArchiveHeader,
    written: u64,
}

impl<W: Write> ArchiveWriter<W> {
    pub fn new(mut inner: W, header: ArchiveHeader) -> Result<Self, TileError> {
        let id = header.slide_id.as_bytes();
        let id_len = u16::try_from(id.len()).map_err(|_| fmt_err("slide_id longer than 65535 bytes"))?;
        if header.patch_px == 0 {
            return Err(fmt_err("patch_px must be positive"));
        }
        if header.payload_len() > u32::MAX as usize {
            return Err(fmt_err("patch too large for u32 length prefix"));
        }
        inner.write_all(&ARCHIVE_MAGIC)?;
        inner.write_all(&header.version.to_le_bytes())?;
        inner.write_all(&id_len.to_le_bytes())?;
        inner.write_all(id)?;
        inner.write_all(&header.patch_px.to_le_bytes())?;
        inner.write_all(&header.target_um_per_px.to_le_bytes())?;
        inner.write_all(&header.record_count.to_le_bytes())?;
        Ok(Self { inner, header, written: 0 })
    }

    pub fn write_record(
        &mut self,
        anchor: (u32, u32),
        tissue_fraction: f64,
        pixels: &[u8],
    ) -> Result<(), TileError> {
        if self.written == self.header.record_count {
            return Err(fmt_err("more records than declared in header"));
        }
        if pixels.len() != self.header.pixel_len() {
            return Err(fmt_err(format!(
                "record has {} pixel bytes, expected {}",
                pixels.len(),
                self.header.pixel_len()
            )));
        }
        let len = self.header.payload_len() as u32;
        self.inner.write_all(&len.to_le_bytes())?;
        self.inner.write_all(&anchor.0.to_le_bytes())?;
        self.inner.write_all(&anchor.1.to_le_bytes())?;
        self.inner.write_all(&tissue_fraction.to_le_bytes())?;
        self.inner.write_all(pixels)?;
        self.written += 1;
        Ok(())
    }

    /// Flush and return the writer; fails if fewer records than declared.
    pub fn finish(mut self) -> Result<W, TileError> {
        if self.written != self.header.record_count {
            return Err(fmt_err(format!(
                "declared {} records, wrote {}",
                self.header.record_count, self.written
            )));
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<(), TileError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => fmt_err(format!("truncated archive while reading {what}")),
        _ => TileError::Io(e),
    })
}

macro_rules! read_le {
    ($r:expr, $ty:ty, $what:expr) => {{
        let mut b = [0u8; std::mem::size_of::<$ty>()];
        read_exact_or($r, &mut b, $what)?;
        <$ty>::from_le_bytes(b)
    }};
}

/// Sequential record reader; validates every length prefix.
pub struct ArchiveReader<R: Read> {
    inner: R,
    header: ArchiveHeader,
    read: u64,
}

impl<R: Read> ArchiveReader<R> {
    pub fn new(mut inner: R) -> Result<Self, TileError> {
        let mut magic = [0u8; 8];
        read_exact_or(&mut inner, &mut magic, "magic")?;
        if magic != ARCHIVE_MAGIC {
            return Err(fmt_err("bad magic bytes"));
        }
        let version = read_le!(&mut inner, u16, "version");
        if version != ARCHIVE_VERSION {
            return Err(fmt_err(format!("unsupported archive version {version}")));
        }
        let id_len = read_le!(&mut inner, u16, "slide id length");
        let mut id = vec![0u8; id_len as usize];
        read_exact_or(&mut inner, &mut id, "slide id")?;
        let slide_id = String::from_utf8(id).map_err(|_| fmt_err("slide id is not utf-8"))?;
        let patch_px = read_le!(&mut inner, u32, "patch_px");
        if patch_px == 0 {
            return Err(fmt_err("patch_px is zero"));
        }
        let target_um_per_px = read_le!(&mut inner, f64, "target_um_per_px");
        let record_count = read_le!(&mut inner, u64, "record count");
        let header = ArchiveHeader { version, slide_id, patch_px, target_um_per_px, record_count };
        Ok(Self { inner, header, read: 0 })
    }

    pub fn header(&self) -> &ArchiveHeader {
        &self.header
    }

    pub fn next_record(&mut self) -> Result<Option<PatchRecord>, TileError> {
        if self.read == self.header.record_count {
            let mut probe = [0u8; 1];
            return match self.inner.read(&mut probe)? {
                0 => Ok(None),
                _ => Err(fmt_err("trailing bytes after declared records")),
            };
        }
        let len = read_le!(&mut self.inner, u32, "record length") as usize;
        if len != self.header.payload_len() {
            return Err(fmt_err(format!(
                "record {} length prefix {len} != expected {}",
                self.read,
                self.header.payload_len()
            )));
        }
        let x = read_le!(&mut self.inner, u32, "anchor x");
        let y = read_le!(&mut self.inner, u32, "anchor y");
        let tissue_fraction = read_le!(&mut self.inner, f64, "tissue fraction");
        let mut pixels = vec![0u8; self.header.pixel_len()];
        read_exact_or(&mut self.inner, &mut pixels, "pixels")?;
        self.read += 1;
        Ok(Some(PatchRecord {
            slide_id: self.header.slide_id.clone(),
            anchor: (x, y),
            patch_px: self.header.patch_px,
            target_um_per_px: self.header.target_um_per_px,
            tissue_fraction,
            pixels,
        }))
    }
}

pub fn write_archive<W: Write>(w: W, archive: &PatchArchive) -> Result<W, TileError> {
    if archive.header.record_count != archive.records.len() as u64 {
        return Err(fmt_err("header record count disagrees with records"));
    }
    let mut writer = ArchiveWriter::new(w, archive.header.clone())?;
    for r in &archive.records {
        if r.slide_id != archive.header.slide_id || r.patch_px != archive.header.patch_px {
            return Err(fmt_err("record does not belong to this archive"));
        }
        writer.write_record(r.anchor, r.tissue_fraction, &r.pixels)?;
    }
    writer.finish()
}

pub fn read_archive<R: Read>(r: R) -> Result<PatchArchive, TileError> {
    let mut reader = ArchiveReader::new(r)?;
    let mut records = Vec::with_capacity(reader.header().record_count.min(1 << 16) as usize);
    while let Some(rec) = reader.next_record()? {
        records.push(rec);
    }
    Ok(PatchArchive { header: reader.header.clone(), records })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PatchArchive {
        let header = ArchiveHeader {
            version: ARCHIVE_VERSION,
            slide_id: "slide-1".into(),
            patch_px: 2,
            target_um_per_px: 1.0,
            record_count: 2,
        };
        let rec = |x, y, v: u8| PatchRecord {
            slide_id: "slide-1".into(),
            anchor: (x, y),
            patch_px: 2,
            target_um_per_px: 1.0,
            tissue_fraction: 0.5,
            pixels: vec![v; 12],
        };
        PatchArchive { header, records: vec![rec(0, 0, 1), rec(2, 0, 9)] }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let a = sample();
        let bytes = write_archive(Vec::new(), &a).unwrap();
        let back = read_archive(&bytes[..]).unwrap();
        assert_eq!(back, a);
        assert_eq!(write_archive(Vec::new(), &back).unwrap(), bytes);
    }

    #[test]
    fn fixed_layout() {
        let bytes = write_archive(Vec::new(), &sample()).unwrap();
        assert_eq!(&bytes[..8], b"IHCPATCH");
        assert_eq!(&bytes[8..10], &1u16.to_le_bytes());
        assert_eq!(&bytes[10..12], &7u16.to_le_bytes());
        assert_eq!(&bytes[12..19], b"slide-1");
        let header_len = 8 + 2 + 2 + 7 + 4 + 8 + 8;
        assert_eq!(bytes.len(), header_len + 2 * (4 + 16 + 12));
        assert_eq!(&bytes[header_len..header_len + 4], &28u32.to_le_bytes());
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = write_archive(Vec::new(), &sample()).unwrap();
        let header_len = 41;
        let mut bad = bytes.clone();
        bad[header_len] ^= 0x01;
        assert!(matches!(read_archive(&bad[..]), Err(TileError::Format(_))));
        let mut bad = bytes.clone();
        bad.push(0);
        assert!(matches!(read_archive(&bad[..]), Err(TileError::Format(_))));
        assert!(matches!(read_archive(&bytes[..bytes.len() - 1]), Err(TileError::Format(_))));
        let mut bad = bytes;
        bad[0] = b'X';
        assert!(matches!(read_archive(&bad[..]), Err(TileError::Format(_))));
    }

    #[test]
    fn writer_enforces_declared_count() {
        let a = sample();
        let mut w = ArchiveWriter::new(Vec::new(), a.header.clone()).unwrap();
        w.write_record((0, 0), 1.0, &[0; 12]).unwrap();
        assert!(w.finish().is_err());
    }
}
