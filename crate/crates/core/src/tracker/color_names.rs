//! Two-channel color descriptor backed by a 32x32x32 RGB lookup table.
//!
//! Table file layout: `b"FTCN"`, version (1), bins per axis, channels (2),
//! one reserved byte, then `bins^3 * channels` signed bytes in r-major,
//! then g, then b order. Stored values are `byte / 254`.

use std::sync::OnceLock;

use crate::error::TrackerError;

const MAGIC: &[u8; 4] = b"FTCN";
const HEADER_LEN: usize = 8;
pub const CN_CHANNELS: usize = 2;

static SHIPPED: &[u8] = include_bytes!("../../data/color_names.bin");

#[derive(Debug, Clone, PartialEq)]
pub struct ColorTable {
    bins: usize,
    values: Vec<[f32; CN_CHANNELS]>,
}

impl ColorTable {
    pub fn decode(bytes: &[u8]) -> Result<Self, TrackerError> {
        let bad = |m: &str| TrackerError::InvalidColorTable(m.to_string());
        if bytes.len() < HEADER_LEN {
            return Err(bad("truncated header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        if bytes[4] != 1 {
            return Err(bad("unsupported version"));
        }
        let bins = bytes[5] as usize;
        if bins == 0 || !bins.is_power_of_two() || bins > 128 {
            return Err(bad("bins per axis must be a power of two in [1, 128]"));
        }
        if bytes[6] as usize != CN_CHANNELS {
            return Err(bad("expected 2 channels"));
        }
        let body = &bytes[HEADER_LEN..];
        let cells = bins * bins * bins;
        if body.len() != cells * CN_CHANNELS {
            return Err(bad("body length does not match header"));
        }
        let values = body
            .chunks_exact(CN_CHANNELS)
            .map(|c| [f32::from(c[0] as i8) / 254.0, f32::from(c[1] as i8) / 254.0])
            .collect();
        Ok(Self { bins, values })
    }

    /// The table compiled into the crate.
    pub fn shipped() -> &'static ColorTable {
        static TABLE: OnceLock<ColorTable> = OnceLock::new();
        TABLE.get_or_init(|| ColorTable::decode(SHIPPED).expect("shipped color table is valid"))
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Looks up an RGB triple with components in [0, 1].
    #[inline]
    pub fn lookup(&self, rgb: [f64; 3]) -> [f64; CN_CHANNELS] {
        let q = |v: f64| ((v.clamp(0.0, 1.0) * self.bins as f64) as usize).min(self.bins - 1);
        let idx = (q(rgb[0]) * self.bins + q(rgb[1])) * self.bins + q(rgb[2]);
        let v = self.values[idx];
        [f64::from(v[0]), f64::from(v[1])]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_table_decodes_and_grays_are_neutral() {
        let t = ColorTable::shipped();
        assert_eq!(t.bins(), 32);
        for g in [0.0, 0.3, 0.77, 1.0] {
            assert_eq!(t.lookup([g, g, g]), [0.0, 0.0]);
        }
    }

    #[test]
    fn shipped_table_matches_opponent_formula() {
        let t = ColorTable::shipped();
        for (r, g, b) in [(31usize, 0usize, 0usize), (0, 31, 0), (5, 17, 29), (12, 12, 3)] {
            let c = |i: usize| (i as f64 + 0.5) / 32.0;
            let (rf, gf, bf) = (c(r), c(g), c(b));
            let v = t.lookup([rf, gf, bf]);
            assert!((v[0] - (rf - bf) / 2.0).abs() < 0.5 / 254.0 + 1e-6);
            assert!((v[1] - (2.0 * gf - rf - bf) / 4.0).abs() < 0.5 / 254.0 + 1e-6);
        }
    }

    #[test]
    fn rejects_malformed_tables() {
        assert!(ColorTable::decode(b"FTCN").is_err());
        assert!(ColorTable::decode(b"XXXX\x01\x02\x02\x00\0\0\0\0\0\0\0\0\0\0\0\0\0\0\0\0").is_err());
        let mut ok = b"FTCN\x01\x02\x02\x00".to_vec();
        ok.extend_from_slice(&[0u8; 16]);
        assert!(ColorTable::decode(&ok).is_ok());
        ok.pop();
        assert!(ColorTable::decode(&ok).is_err());
        let mut three = b"FTCN\x01\x03\x02\x00".to_vec();
        three.extend_from_slice(&[0u8; 54]);
        assert!(ColorTable::decode(&three).is_err());
    }
}
