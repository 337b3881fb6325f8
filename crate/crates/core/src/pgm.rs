//! Portable graymap (PGM) reading and writing, plain (`P2`) and binary (`P5`).

use std::io::Write;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PgmError {
    #[error("bad magic number: expected P2 or P5, found {0:?}")]
    BadMagic(String),
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("unexpected end of pixel data: expected {expected} samples, got {got}")]
    UnexpectedEof { expected: usize, got: usize },
    #[error("pixel value {value} at sample {index} exceeds maxval {maxval}")]
    PixelOutOfRange { index: usize, value: u32, maxval: u16 },
    #[error("malformed pixel data at sample {index}: {token:?}")]
    BadPixel { index: usize, token: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    Plain,
    Binary,
}

/// Grayscale raster, row-major, `pixels[y * width + x]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayscaleImage {
    width: usize,
    height: usize,
    maxval: u16,
    pixels: Vec<u16>,
}

impl GrayscaleImage {
    pub fn new(width: usize, height: usize, maxval: u16, pixels: Vec<u16>) -> Result<Self, PgmError> {
        if width == 0 || height == 0 {
            return Err(PgmError::BadHeader("width and height must be positive".into()));
        }
        if maxval == 0 {
            return Err(PgmError::BadHeader("maxval must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(PgmError::UnexpectedEof {
                expected: width * height,
                got: pixels.len(),
            });
        }
        if let Some((index, &value)) = pixels.iter().enumerate().find(|(_, &p)| p > maxval) {
            return Err(PgmError::PixelOutOfRange {
                index,
                value: value as u32,
                maxval,
            });
        }
        Ok(GrayscaleImage {
            width,
            height,
            maxval,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn maxval(&self) -> u16 {
        self.maxval
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> u16 {
        self.pixels[y * self.width + x]
    }

    pub fn encode(&self, format: PgmFormat) -> Vec<u8> {
        let magic = match format {
            PgmFormat::Plain => "P2",
            PgmFormat::Binary => "P5",
        };
        let mut out = format!("{magic}\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        match format {
            PgmFormat::Plain => {
                for row in self.pixels.chunks(self.width) {
                    let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
                    out.extend_from_slice(line.join(" ").as_bytes());
                    out.push(b'\n');
                }
            }
            PgmFormat::Binary => {
                if self.maxval < 256 {
                    out.extend(self.pixels.iter().map(|&p| p as u8));
                } else {
                    for &p in &self.pixels {
                        out.extend_from_slice(&p.to_be_bytes());
                    }
                }
            }
        }
        out
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    /// Skips whitespace and `#` comments (to end of line).
    fn skip_ws(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' && self.data[self.pos] != b'\r' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() && self.data[self.pos] != b'#' {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.data[start..self.pos])
    }

    fn header_number(&mut self, field: &str) -> Result<u32, PgmError> {
        let tok = self
            .token()
            .ok_or_else(|| PgmError::BadHeader(format!("missing {field}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| PgmError::BadHeader(format!("{field} is not a number: {:?}", String::from_utf8_lossy(tok))))
    }
}

pub fn parse_pgm(data: &[u8]) -> Result<GrayscaleImage, PgmError> {
    if data.len() < 2 {
        return Err(PgmError::BadMagic(String::from_utf8_lossy(data).into_owned()));
    }
    let format = match &data[..2] {
        b"P2" => PgmFormat::Plain,
        b"P5" => PgmFormat::Binary,
        other => return Err(PgmError::BadMagic(String::from_utf8_lossy(other).into_owned())),
    };
    let mut cur = Cursor { data, pos: 2 };
    if cur.pos < data.len() && !data[cur.pos].is_ascii_whitespace() && data[cur.pos] != b'#' {
        return Err(PgmError::BadMagic(String::from_utf8_lossy(&data[..3]).into_owned()));
    }
    let width = cur.header_number("width")? as usize;
    let height = cur.header_number("height")? as usize;
    let maxval = cur.header_number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PgmError::BadHeader("width and height must be positive".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(PgmError::BadHeader(format!("maxval {maxval} outside 1..=65535")));
    }
    let maxval = maxval as u16;
    let expected = width * height;
    let mut pixels = Vec::with_capacity(expected);
    match format {
        PgmFormat::Plain => {
            for index in 0..expected {
                let Some(tok) = cur.token() else {
                    return Err(PgmError::UnexpectedEof { expected, got: index });
                };
                let value = std::str::from_utf8(tok)
                    .ok()
                    .and_then(|s| s.parse::<u32>().ok())
                    .ok_or_else(|| PgmError::BadPixel {
                        index,
                        token: String::from_utf8_lossy(tok).into_owned(),
                    })?;
                if value > maxval as u32 {
                    return Err(PgmError::PixelOutOfRange { index, value, maxval });
                }
                pixels.push(value as u16);
            }
        }
        PgmFormat::Binary => {
            // exactly one whitespace byte separates maxval from the raster
            if cur.pos >= data.len() || !data[cur.pos].is_ascii_whitespace() {
                return Err(PgmError::UnexpectedEof { expected, got: 0 });
            }
            let raster = &data[cur.pos + 1..];
            let bytes_per = if maxval < 256 { 1 } else { 2 };
            let available = raster.len() / bytes_per;
            if available < expected {
                return Err(PgmError::UnexpectedEof {
                    expected,
                    got: available,
                });
            }
            for index in 0..expected {
                let value = if bytes_per == 1 {
                    raster[index] as u32
                } else {
                    u16::from_be_bytes([raster[2 * index], raster[2 * index + 1]]) as u32
                };
                if value > maxval as u32 {
                    return Err(PgmError::PixelOutOfRange { index, value, maxval });
                }
                pixels.push(value as u16);
            }
        }
    }
    Ok(GrayscaleImage {
        width,
        height,
        maxval,
        pixels,
    })
}

pub fn load_pgm(path: impl AsRef<Path>) -> crate::Result<GrayscaleImage> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|source| crate::Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_pgm(&data)?)
}

pub fn save_pgm(path: impl AsRef<Path>, image: &GrayscaleImage, format: PgmFormat) -> crate::Result<()> {
    let path = path.as_ref();
    let io_err = |source| crate::Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    file.write_all(&image.encode(format)).map_err(io_err)?;
    Ok(())
}
