//! Image and sequence files.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Grey-level image with pixels in raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, maxval: u16, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        if maxval == 0 {
            return Err(Error::invalid("maxval must be positive"));
        }
        Ok(Image {
            width,
            height,
            maxval,
            pixels,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        read_pgm(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, write_pgm(self)).map_err(|e| Error::io(path, e))
    }

    /// Top-left `w x h` window starting at column `x`, row `y`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Image> {
        if x + w > self.width || y + h > self.height {
            return Err(Error::invalid(format!(
                "crop {w}x{h}+{x}+{y} exceeds a {}x{} image",
                self.width, self.height
            )));
        }
        let pixels = (y..y + h)
            .flat_map(|r| self.pixels[r * self.width + x..r * self.width + x + w].iter().cloned())
            .collect();
        Image::new(w, h, self.maxval, pixels)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Pgm {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
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
            return Err(self.fail(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::Pgm {
                offset: start,
                reason: format!("{what} out of range"),
            })
    }
}

/// Parses a binary (P5) PGM.
pub fn read_pgm(bytes: &[u8]) -> Result<Image> {
    let mut cur = Cursor { bytes, pos: 0 };
    if !bytes.starts_with(b"P5") {
        return Err(cur.fail("missing P5 magic number"));
    }
    cur.pos = 2;
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(cur.fail("image has no pixels"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(cur.fail(format!("maxval {maxval} outside 1..=65535")));
    }
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(cur.fail("expected a single whitespace byte before the raster"));
    }
    cur.pos += 1;
    let depth = if maxval < 256 { 1 } else { 2 };
    let needed = width * height * depth;
    let raster = &bytes[cur.pos..];
    if raster.len() < needed {
        cur.pos = bytes.len();
        return Err(cur.fail(format!("raster truncated: {} of {needed} bytes", raster.len())));
    }
    let pixels = if depth == 1 {
        raster[..needed].iter().map(|&b| b as f64).collect()
    } else {
        raster[..needed]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
            .collect()
    };
    Image::new(width, height, maxval as u16, pixels)
}

/// Encodes as binary PGM, rounding and clamping pixels to `[0, maxval]`.
pub fn write_pgm(image: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", image.width, image.height, image.maxval).into_bytes();
    let max = image.maxval as f64;
    for &p in &image.pixels {
        let v = if p.is_nan() { 0.0 } else { p.round().clamp(0.0, max) };
        if image.maxval < 256 {
            out.push(v as u8);
        } else {
            out.extend_from_slice(&(v as u16).to_be_bytes());
        }
    }
    out
}

/// One value per line; blank lines, `#` comments and a non-numeric header
/// line are skipped.
pub fn read_sequence_csv(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() || field.starts_with('#') {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(Error::Parse(format!("line {}: '{field}' is not a number", i + 1))),
        }
    }
    Ok(out)
}

pub fn write_sequence_csv<W: Write>(values: &[f64], mut out: W) -> Result<()> {
    let io = |e| Error::io("<sequence>", e);
    for v in values {
        writeln!(out, "{v}").map_err(io)?;
    }
    Ok(())
}

/// Little-endian `u64` length followed by that many `f64` values.
pub fn read_sequence_binary(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() < 8 {
        return Err(Error::Parse("binary sequence shorter than its length header".into()));
    }
    let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != n.saturating_mul(8) {
        return Err(Error::Parse(format!(
            "binary sequence declares {n} values but carries {} bytes",
            body.len()
        )));
    }
    Ok(body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

pub fn write_sequence_binary(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * values.len());
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Reads a sequence, choosing the format from the extension (`.bin` or
/// `.f64` for binary, anything else CSV).
pub fn load_sequence(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if is_binary(path) {
        read_sequence_binary(&bytes)
    } else {
        read_sequence_csv(&String::from_utf8_lossy(&bytes))
    }
}

pub fn save_sequence(values: &[f64], path: &Path) -> Result<()> {
    let bytes = if is_binary(path) {
        write_sequence_binary(values)
    } else {
        let mut buf = Vec::new();
        write_sequence_csv(values, &mut buf)?;
        buf
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn is_binary(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("bin" | "f64"))
}
