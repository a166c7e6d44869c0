use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::raster::StructMaps;

const MAGIC: &[u8; 4] = b"TSQT";

/// Writes `3 x H x W` little-endian f32 maps behind a small header.
pub fn write_tsqt(path: impl AsRef<Path>, maps: &StructMaps) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    for d in [3u32, maps.height as u32, maps.width as u32] {
        w.write_all(&d.to_le_bytes())?;
    }
    for v in maps.to_chw() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tsqt(path: impl AsRef<Path>) -> Result<StructMaps> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a TSQT tensor file".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (c, h, w) = (dim(0), dim(1), dim(2));
    if c != 3 || bytes.len() != 16 + 4 * c * h * w {
        return Err(Error::Format(format!("TSQT payload does not match dims ({c},{h},{w})")));
    }
    let data: Vec<f32> = bytes[16..].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    Ok(StructMaps::from_chw(h, w, &data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.tsqt");
        let maps = StructMaps::from_chw(2, 3, &(0..18).map(|i| i as f32 / 18.0).collect::<Vec<_>>());
        write_tsqt(&p, &maps).unwrap();
        let raw = std::fs::read(&p).unwrap();
        assert_eq!(&raw[..4], b"TSQT");
        assert_eq!(&raw[4..16], &[3, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(raw.len(), 16 + 18 * 4);
        assert_eq!(read_tsqt(&p).unwrap().to_chw(), maps.to_chw());
        std::fs::write(&p, b"nope").unwrap();
        assert!(matches!(read_tsqt(&p), Err(Error::Format(_))));
    }
}
