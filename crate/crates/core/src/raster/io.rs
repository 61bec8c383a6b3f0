//! PGM (P2/P5) and PNG reading, PGM P5 and PNG writing.

use std::path::Path;

use super::{Image, RasterError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Png,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self, RasterError> {
        match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
            Some("pgm") => Ok(ImageFormat::Pgm),
            Some("png") => Ok(ImageFormat::Png),
            other => Err(RasterError::UnsupportedFormat(format!("cannot write extension {:?}", other.unwrap_or("")))),
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> RasterError {
    RasterError::IoFailure { path: path.display().to_string(), source }
}

pub fn load(path: impl AsRef<Path>) -> Result<Image, RasterError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    decode(&bytes)
}

pub fn save(img: &Image, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    let bytes = match ImageFormat::from_path(path)? {
        ImageFormat::Pgm => encode_pgm(img),
        ImageFormat::Png => encode_png(img)?,
    };
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Decodes PGM or PNG by sniffing the magic bytes.
pub fn decode(bytes: &[u8]) -> Result<Image, RasterError> {
    if bytes.starts_with(b"\x89PNG") {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        decode_pgm(bytes)
    } else if bytes.len() < 2 {
        Err(RasterError::CorruptFile("file too short".into()))
    } else {
        Err(RasterError::UnsupportedFormat("not a PGM or PNG file".into()))
    }
}

pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(&img.to_u8());
    out
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>, RasterError> {
    let gray = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.to_u8())
        .expect("buffer matches dimensions");
    let mut out = Vec::new();
    gray.write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png)
        .map_err(|e| RasterError::InvalidData(e.to_string()))?;
    Ok(out)
}

fn decode_png(bytes: &[u8]) -> Result<Image, RasterError> {
    use image::DynamicImage;
    let dynamic = image::load_from_memory_with_format(bytes, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::Unsupported(u) => RasterError::UnsupportedFormat(u.to_string()),
        other => RasterError::CorruptFile(other.to_string()),
    })?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    match dynamic {
        DynamicImage::ImageLuma8(g) => Image::from_u8(w, h, g.as_raw()),
        DynamicImage::ImageLumaA8(g) => {
            let luma: Vec<u8> = g.pixels().map(|p| p.0[0]).collect();
            Image::from_u8(w, h, &luma)
        }
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            let rgb = dynamic.to_rgb8();
            let pixels = rgb
                .pixels()
                .map(|p| {
                    let [r, g, b] = p.0;
                    ((0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0).clamp(0.0, 1.0) as f32
                })
                .collect();
            Image::new(w, h, pixels)
        }
        other => Err(RasterError::UnsupportedFormat(format!("PNG color type {:?}", other.color()))),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, RasterError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(RasterError::CorruptFile(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| RasterError::CorruptFile(format!("bad {what}")))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<Image, RasterError> {
    let binary = bytes.starts_with(b"P5");
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(RasterError::CorruptFile("zero dimension".into()));
    }
    if maxval == 0 {
        return Err(RasterError::CorruptFile("zero maxval".into()));
    }
    if maxval > 255 {
        return Err(RasterError::UnsupportedFormat(format!("maxval {maxval} (16-bit PGM)")));
    }
    let n = width.checked_mul(height).ok_or_else(|| RasterError::CorruptFile("dimensions overflow".into()))?;
    let scale = maxval as f32;
    let mut pixels = Vec::with_capacity(n.min(1 << 26));
    if binary {
        // exactly one whitespace byte separates the header from the raster
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(RasterError::CorruptFile("truncated header".into()));
        }
        let data = &bytes[cur.pos + 1..];
        if data.len() < n {
            return Err(RasterError::CorruptFile(format!("expected {n} bytes of raster, found {}", data.len())));
        }
        for &v in &data[..n] {
            if v as usize > maxval {
                return Err(RasterError::CorruptFile(format!("sample {v} exceeds maxval {maxval}")));
            }
            pixels.push(v as f32 / scale);
        }
    } else {
        for _ in 0..n {
            let v = cur.number("sample")?;
            if v > maxval {
                return Err(RasterError::CorruptFile(format!("sample {v} exceeds maxval {maxval}")));
            }
            pixels.push(v as f32 / scale);
        }
    }
    Image::new(width, height, pixels)
}
