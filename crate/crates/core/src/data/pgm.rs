//! Portable graymap (P2 ASCII / P5 binary) with maxval 255. Masks store the
//! class id as the pixel value; images are quantized with round-half-up.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{GrayImage, LabelMask};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PgmFormat {
    Ascii,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawPgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// `round(v * 255)` with halves rounded up.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> std::result::Result<usize, (usize, String)> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(match self.bytes.get(self.pos) {
                None => (self.pos, format!("unexpected end of data reading {what}")),
                Some(b) => (self.pos, format!("expected {what}, found byte {b:#04x}")),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| (start, format!("{what} out of range")))
    }
}

/// Parses a P2 or P5 graymap; errors carry the byte offset.
pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<RawPgm, (usize, String)> {
    let format = match bytes.get(..2) {
        Some(b"P2") => PgmFormat::Ascii,
        Some(b"P5") => PgmFormat::Binary,
        _ => return Err((0, "missing P2/P5 magic".into())),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err((maxval_at, format!("maxval {maxval} is not 255")));
    }
    if width == 0 || height == 0 {
        return Err((maxval_at, format!("empty {width}x{height} image")));
    }
    let n = width * height;
    let pixels = match format {
        PgmFormat::Binary => {
            // exactly one whitespace byte separates the header from the raster
            match bytes.get(cur.pos) {
                Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
                _ => return Err((cur.pos, "missing whitespace after maxval".into())),
            }
            let payload = &bytes[cur.pos..];
            if payload.len() < n {
                return Err((
                    bytes.len(),
                    format!("truncated raster: {} of {n} bytes", payload.len()),
                ));
            }
            if payload.len() > n {
                return Err((cur.pos + n, format!("{} trailing bytes after raster", payload.len() - n)));
            }
            payload.to_vec()
        }
        PgmFormat::Ascii => {
            let mut pixels = Vec::with_capacity(n);
            for i in 0..n {
                let at = cur.pos;
                let v = cur.number(&format!("pixel {i}"))?;
                if v > 255 {
                    return Err((at, format!("pixel value {v} exceeds maxval")));
                }
                pixels.push(v as u8);
            }
            pixels
        }
    };
    Ok(RawPgm { width, height, pixels })
}

pub fn encode_pgm(raw: &RawPgm, format: PgmFormat) -> Vec<u8> {
    let magic = match format {
        PgmFormat::Ascii => "P2",
        PgmFormat::Binary => "P5",
    };
    let mut out = format!("{magic}\n{} {}\n255\n", raw.width, raw.height).into_bytes();
    match format {
        PgmFormat::Binary => out.extend_from_slice(&raw.pixels),
        PgmFormat::Ascii => {
            for row in raw.pixels.chunks(raw.width) {
                let line: Vec<String> = row.iter().map(u8::to_string).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
    }
    out
}

fn read_raw(path: &Path) -> Result<RawPgm> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|(offset, detail)| Error::Pgm {
        path: path.to_path_buf(),
        offset,
        detail,
    })
}

fn write_raw(path: &Path, raw: &RawPgm, format: PgmFormat) -> Result<()> {
    fs::write(path, encode_pgm(raw, format)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let raw = read_raw(path.as_ref())?;
    GrayImage::new(
        raw.height,
        raw.width,
        raw.pixels.iter().map(|&b| b as f64 / 255.0).collect(),
    )
}

pub fn read_pgm_mask(path: impl AsRef<Path>, num_classes: usize) -> Result<LabelMask> {
    let raw = read_raw(path.as_ref())?;
    LabelMask::new(raw.height, raw.width, num_classes, raw.pixels)
}

pub fn write_pgm_image(path: impl AsRef<Path>, image: &GrayImage, format: PgmFormat) -> Result<()> {
    let raw = RawPgm {
        width: image.width(),
        height: image.height(),
        pixels: image.pixels().iter().map(|&v| quantize(v)).collect(),
    };
    write_raw(path.as_ref(), &raw, format)
}

pub fn write_pgm_mask(path: impl AsRef<Path>, mask: &LabelMask, format: PgmFormat) -> Result<()> {
    let raw = RawPgm {
        width: mask.width(),
        height: mask.height(),
        pixels: mask.classes().to_vec(),
    };
    write_raw(path.as_ref(), &raw, format)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_header_and_truncation() {
        let mut ok = b"P5 2 2 255\n".to_vec();
        ok.extend_from_slice(&[0, 1, 2, 3]);
        assert_eq!(decode_pgm(&ok).unwrap().pixels, vec![0, 1, 2, 3]);
        let (offset, msg) = decode_pgm(&ok[..ok.len() - 1]).unwrap_err();
        assert!(msg.contains("truncated"), "{msg}");
        assert_eq!(offset, ok.len() - 1);
    }

    #[test]
    fn rejects_other_maxval_and_magic() {
        assert!(decode_pgm(b"P5 2 2 65535\n\0\0\0\0").unwrap_err().1.contains("maxval"));
        assert_eq!(decode_pgm(b"P6 2 2 255\n").unwrap_err().0, 0);
    }

    #[test]
    fn ascii_with_comments() {
        let raw = decode_pgm(b"P2\n# made by hand\n2 2\n255\n0 1\n1 0\n").unwrap();
        assert_eq!(raw.pixels, vec![0, 1, 1, 0]);
        assert!(decode_pgm(b"P2 2 2 255 0 1 1").is_err());
        assert!(decode_pgm(b"P2 2 2 255 0 1 1 256").is_err());
    }

    #[test]
    fn quantization_rounds_half_up() {
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(127.49 / 255.0), 127);
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mask = LabelMask::new(2, 2, 2, vec![0, 1, 1, 0]).unwrap();
        for format in [PgmFormat::Ascii, PgmFormat::Binary] {
            let p = dir.path().join("m.pgm");
            write_pgm_mask(&p, &mask, format).unwrap();
            assert_eq!(read_pgm_mask(&p, 2).unwrap(), mask);
        }
        let image = GrayImage::new(8, 8, vec![0.5; 64]).unwrap();
        let p = dir.path().join("i.pgm");
        write_pgm_image(&p, &image, PgmFormat::Binary).unwrap();
        let back = read_pgm_image(&p).unwrap();
        assert!(back.pixels().iter().all(|&v| v == 128.0 / 255.0));
    }

    #[test]
    fn file_errors_carry_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.pgm");
        std::fs::write(&p, b"P5 2 2 255\n\0\0\0").unwrap();
        let err = read_pgm_mask(&p, 2).unwrap_err().to_string();
        assert!(err.contains("bad.pgm") && err.contains("truncated"), "{err}");
    }
}
