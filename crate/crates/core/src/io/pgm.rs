//! Binary grayscale PGM (P5) images.

use std::path::Path;

use crate::error::{Result, UqError};
use crate::map::{DenseMap, MapKind, Shape};

/// Reads whitespace-separated ASCII header tokens, skipping `#` comments.
struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(UqError::format(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| UqError::format(start, format!("{what} is out of range")))
    }
}

/// Decodes a P5 image into a single-channel map scaled to `[0, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> Result<DenseMap> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(UqError::format(0, "not a PNM file"));
    }
    match bytes[1] {
        b'5' => {}
        v @ b'1'..=b'7' => {
            return Err(UqError::format(
                0,
                format!("unsupported PNM variant P{}, only binary P5 is read", v as char),
            ))
        }
        _ => return Err(UqError::format(1, "bad PNM magic")),
    }
    let mut r = HeaderReader { bytes, pos: 2 };
    let width = r.number("width")?;
    let height = r.number("height")?;
    let maxval_at = {
        r.skip_space();
        r.pos
    };
    let maxval = r.number("maxval")?;
    if !(1..=65535).contains(&maxval) {
        return Err(UqError::format(maxval_at, format!("maxval {maxval} is outside 1..=65535")));
    }
    if r.pos >= bytes.len() || !bytes[r.pos].is_ascii_whitespace() {
        return Err(UqError::format(r.pos, "missing whitespace after maxval"));
    }
    let start = r.pos + 1;
    let sample = if maxval > 255 { 2 } else { 1 };
    let n = width * height;
    let payload = &bytes[start..];
    if payload.len() < n * sample {
        return Err(UqError::format(
            bytes.len(),
            format!("payload holds {} bytes, {} needed", payload.len(), n * sample),
        ));
    }
    let scale = maxval as f64;
    let values: Vec<f64> = if sample == 1 {
        payload[..n].iter().map(|&b| f64::from(b) / scale).collect()
    } else {
        payload[..2 * n]
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) / scale)
            .collect()
    };
    if let Some(i) = values.iter().position(|&v| v > 1.0) {
        return Err(UqError::format(start + i * sample, "sample exceeds maxval"));
    }
    DenseMap::new(Shape::new(height, width, 1), values, MapKind::Real)
}

/// Encodes a single-channel map with values in `[0, 1]` as an 8-bit P5 image,
/// rounding to the nearest level.
pub fn encode_pgm(map: &DenseMap) -> Result<Vec<u8>> {
    map.expect_single_channel("PGM image")?;
    if let Some(v) = map.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(UqError::invalid(format!("PGM value {v} is outside [0, 1]")));
    }
    let mut out = format!("P5\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    out.extend(map.values().iter().map(|&v| (v * 255.0).round() as u8));
    Ok(out)
}

pub fn read_image_pgm(path: impl AsRef<Path>) -> Result<DenseMap> {
    decode_pgm(&std::fs::read(path)?)
}

pub fn write_image_pgm(map: &DenseMap, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_pgm(map)?)?;
    Ok(())
}

/// Min-max normalized 8-bit preview of the first channel of any map.
pub fn preview(map: &DenseMap) -> DenseMap {
    let s = map.shape();
    let first: Vec<f64> = (0..s.pixels()).map(|i| map.pixel(i)[0]).collect();
    DenseMap::raw(Shape::new(s.height, s.width, 1), first, MapKind::Real).normalized_or_zero()
}
