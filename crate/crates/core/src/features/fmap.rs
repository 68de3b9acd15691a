//! FMAP v1 binary feature-map files.
//!
//! Layout: `FMAP` magic, then little-endian u32 version, width, height,
//! channels, followed by `width * height * channels` little-endian f32 values
//! (row-major, channel-interleaved).

use std::path::Path;

use super::FeatureMap;
use crate::error::{Error, Result};

pub const FMAP_MAGIC: &[u8; 4] = b"FMAP";
pub const FMAP_VERSION: u32 = 1;
pub const FMAP_HEADER_LEN: usize = 20;

fn read_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

impl FeatureMap {
    pub fn to_fmap_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FMAP_HEADER_LEN + self.data().len() * 4);
        out.extend_from_slice(FMAP_MAGIC);
        for v in [
            FMAP_VERSION,
            self.width() as u32,
            self.height() as u32,
            self.channels() as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a complete FMAP byte buffer. Offsets in errors are relative to `bytes`.
    pub fn from_fmap_bytes(bytes: &[u8]) -> Result<FeatureMap> {
        if bytes.len() < FMAP_HEADER_LEN {
            return Err(Error::format(
                bytes.len(),
                format!(
                    "truncated header: expected {FMAP_HEADER_LEN} bytes, got {}",
                    bytes.len()
                ),
            ));
        }
        if &bytes[0..4] != FMAP_MAGIC {
            return Err(Error::format(0, "bad magic, expected `FMAP`"));
        }
        let version = read_u32(bytes, 4);
        if version != FMAP_VERSION {
            return Err(Error::format(4, format!("unsupported version {version}")));
        }
        let width = read_u32(bytes, 8) as usize;
        let height = read_u32(bytes, 12) as usize;
        let channels = read_u32(bytes, 16) as usize;
        if channels == 0 {
            return Err(Error::format(16, "channel count must be >= 1"));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::format(8, "dimensions overflow"))?;
        let actual = bytes.len() - FMAP_HEADER_LEN;
        if actual != expected {
            return Err(Error::format(
                FMAP_HEADER_LEN,
                format!("payload size mismatch: expected {expected} bytes, got {actual}"),
            ));
        }
        let mut data = Vec::with_capacity(expected / 4);
        for (i, chunk) in bytes[FMAP_HEADER_LEN..].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::format(FMAP_HEADER_LEN + 4 * i, "non-finite feature value"));
            }
            data.push(v);
        }
        FeatureMap::new(width, height, channels, data)
    }
}

pub fn load_feature_map(path: &Path) -> Result<FeatureMap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureMap::from_fmap_bytes(&bytes)
}

pub fn save_feature_map(map: &FeatureMap, path: &Path) -> Result<()> {
    std::fs::write(path, map.to_fmap_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tiny_layout() {
        let m = FeatureMap::new(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let bytes = m.to_fmap_bytes();
        assert_eq!(bytes.len(), 20 + 16);
        assert_eq!(&bytes[..4], b"FMAP");
        assert_eq!(read_u32(&bytes, 4), 1);
        assert_eq!(&bytes[20..24], &0.0f32.to_le_bytes());
        assert_eq!(&bytes[24..28], &1.0f32.to_le_bytes());
        assert_eq!(FeatureMap::from_fmap_bytes(&bytes).unwrap(), m);
    }

    #[test]
    fn file_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let m = FeatureMap::new(3, 2, 2, (0..12).map(|i| i as f32 * 0.37 - 1.0).collect()).unwrap();
        let p = dir.path().join("a.fmap");
        save_feature_map(&m, &p).unwrap();
        let original = std::fs::read(&p).unwrap();
        let loaded = load_feature_map(&p).unwrap();
        let p2 = dir.path().join("b.fmap");
        save_feature_map(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p2).unwrap(), original);
    }

    #[test]
    fn format_errors() {
        let m = FeatureMap::new(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let good = m.to_fmap_bytes();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            FeatureMap::from_fmap_bytes(&bad_magic),
            Err(Error::Format { offset: 0, .. })
        ));

        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(matches!(
            FeatureMap::from_fmap_bytes(&bad_version),
            Err(Error::Format { offset: 4, .. })
        ));

        let truncated = &good[..good.len() - 3];
        let err = FeatureMap::from_fmap_bytes(truncated).unwrap_err().to_string();
        assert!(err.contains("expected 16 bytes, got 13"), "{err}");

        assert!(FeatureMap::from_fmap_bytes(&good[..10]).is_err());

        let mut nan = good.clone();
        nan[20..24].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            FeatureMap::from_fmap_bytes(&nan),
            Err(Error::Format { offset: 20, .. })
        ));
    }

    proptest! {
        #[test]
        fn bytes_round_trip(w in 0usize..6, h in 0usize..6, c in 1usize..4, seed in any::<u32>()) {
            let data: Vec<f32> = (0..w * h * c)
                .map(|i| ((i as u32).wrapping_mul(2654435761) ^ seed) as f32 * 1e-7)
                .collect();
            let m = FeatureMap::new(w, h, c, data).unwrap();
            let bytes = m.to_fmap_bytes();
            let back = FeatureMap::from_fmap_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_fmap_bytes(), bytes);
        }
    }
}
