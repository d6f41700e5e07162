//! Binary PGM (P5) reading and writing.
//!
//! Written files are always `P5\n{width} {height}\n255\n` followed by one
//! byte per pixel, row-major. The reader accepts any P5 file with
//! `maxval <= 255`, including `#` comments in the header.

use std::path::Path;

use pointscatter::{BinaryMask, ScoreMap};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u8>,
}

impl Pgm {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, String> {
        let mut pos = 0;
        let token = |pos: &mut usize| -> Result<String, String> {
            loop {
                while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                    *pos += 1;
                }
                if *pos < bytes.len() && bytes[*pos] == b'#' {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = *pos;
            while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
                *pos += 1;
            }
            if start == *pos {
                return Err(format!("unexpected end of header at byte {start}"));
            }
            Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
        };
        let magic = token(&mut pos)?;
        if magic != "P5" {
            return Err(format!("expected P5 magic, found {magic:?}"));
        }
        let number = |name: &str, pos: &mut usize| -> Result<usize, String> {
            let at = *pos;
            let t = token(pos)?;
            t.parse::<usize>()
                .map_err(|_| format!("invalid {name} {t:?} at byte {at}"))
        };
        let width = number("width", &mut pos)?;
        let height = number("height", &mut pos)?;
        let maxval = number("maxval", &mut pos)?;
        if maxval == 0 || maxval > 255 {
            return Err(format!("unsupported maxval {maxval}"));
        }
        // exactly one whitespace byte separates the header from the raster
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(format!("missing raster separator at byte {pos}"));
        }
        pos += 1;
        let expected = width * height;
        let raster = &bytes[pos..];
        if raster.len() != expected {
            return Err(format!(
                "raster has {} bytes, expected {expected} at byte {pos}",
                raster.len()
            ));
        }
        Ok(Self {
            width,
            height,
            maxval: maxval as u16,
            pixels: raster.to_vec(),
        })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::decode(&bytes).map_err(|m| CliError::Parse(format!("{}: {m}", path.display())))
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.encode()).map_err(|e| CliError::io(path, e))
    }

    /// Intensities scaled to `[0, 1]` by `maxval`.
    pub fn to_score_map(&self) -> ScoreMap {
        let m = self.maxval as f64;
        let data = self
            .pixels
            .iter()
            .map(|&v| (v as f64 / m).min(1.0))
            .collect();
        ScoreMap::from_vec(self.height, self.width, data).expect("scaled into [0, 1]")
    }

    /// Nonzero pixels are foreground.
    pub fn to_mask(&self) -> BinaryMask {
        let data = self.pixels.iter().map(|&v| (v != 0) as u8).collect();
        BinaryMask::from_vec(self.height, self.width, data).expect("shape matches")
    }

    /// Scores scaled to `0..=255`, rounding half up.
    pub fn from_score_map(map: &ScoreMap) -> Self {
        Self {
            width: map.width(),
            height: map.height(),
            maxval: 255,
            pixels: map.data().iter().map(|&v| quantize(v)).collect(),
        }
    }

    /// Foreground is 255, background 0.
    pub fn from_mask(mask: &BinaryMask) -> Self {
        Self {
            width: mask.width(),
            height: mask.height(),
            maxval: 255,
            pixels: mask.data().iter().map(|&v| v * 255).collect(),
        }
    }
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_layout_is_exact() {
        let p = Pgm {
            width: 3,
            height: 2,
            maxval: 255,
            pixels: vec![0, 1, 2, 253, 254, 255],
        };
        let bytes = p.encode();
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(&bytes[11..], &[0, 1, 2, 253, 254, 255]);
        assert_eq!(Pgm::decode(&bytes).unwrap(), p);
    }

    #[test]
    fn header_comments_and_maxval() {
        let mut bytes = b"P5 # made by hand\n2 1\n# comment\n15\n".to_vec();
        bytes.extend_from_slice(&[0, 15]);
        let p = Pgm::decode(&bytes).unwrap();
        assert_eq!((p.width, p.height, p.maxval), (2, 1, 15));
        assert_eq!(p.to_score_map().data(), &[0.0, 1.0]);
    }

    #[test]
    fn malformed_inputs() {
        assert!(Pgm::decode(b"P2\n1 1\n255\n0").is_err());
        assert!(Pgm::decode(b"P5\n2 2\n255\n\x00")
            .unwrap_err()
            .contains("expected 4"));
        assert!(Pgm::decode(b"P5\nx 2\n255\n")
            .unwrap_err()
            .contains("width"));
        assert!(Pgm::decode(b"P5\n1 1\n300\n\x00").is_err());
    }

    #[test]
    fn mask_round_trip_is_lossless() {
        let m = BinaryMask::from_rows(&[[0, 1, 1], [1, 0, 0]]).unwrap();
        let p = Pgm::decode(&Pgm::from_mask(&m).encode()).unwrap();
        assert_eq!(p.to_mask(), m);
    }

    #[test]
    fn score_round_trip_within_quantization() {
        let vals: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let map = ScoreMap::from_vec(1, vals.len(), vals.clone()).unwrap();
        let back = Pgm::decode(&Pgm::from_score_map(&map).encode())
            .unwrap()
            .to_score_map();
        for (a, b) in vals.iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(1.0), 255);
    }
}
