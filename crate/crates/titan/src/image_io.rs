//! 8-bit image files: binary PGM (`P5`, grayscale) and PNG (grayscale or
//! RGB). Pixel values map to `[0, 1]` by `/255`; saving rounds to nearest.
//!
//! Grayscale images load as `H x W` tensors, RGB as `H x W x 3`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use titan_core::Tensor;

use crate::error::{HarnessError, Result};

pub fn load_image(path: &Path) -> Result<Tensor> {
    let mut bytes = Vec::new();
    File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| HarnessError::io(path, e))?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes).map_err(|d| HarnessError::format(path, d))
    } else if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes).map_err(|d| HarnessError::format(path, d))
    } else {
        let magic: String = bytes.iter().take(2).map(|&b| b as char).collect();
        Err(HarnessError::format(path, format!("unsupported image format (magic {magic:?}); expected PGM P5 or PNG")))
    }
}

/// Writes `H x W` images as PGM (`.pgm`) or grayscale PNG, and `H x W x 3`
/// images as RGB PNG. Values are clamped to `[0, 1]`.
pub fn save_image(image: &Tensor, path: &Path) -> Result<()> {
    let (h, w, c) = match *image.shape() {
        [h, w] => (h, w, 1),
        [h, w, 3] => (h, w, 3),
        ref s => return Err(HarnessError::format(path, format!("cannot save tensor of shape {s:?} as an image"))),
    };
    let pixels: Vec<u8> = image.data().iter().map(|&v| quantize(v)).collect();
    let is_pgm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm && c != 1 {
        return Err(HarnessError::format(path, "PGM output needs a single-channel image"));
    }
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = BufWriter::new(file);
    if is_pgm {
        write!(out, "P5\n{w} {h}\n255\n")
            .and_then(|_| out.write_all(&pixels))
            .and_then(|_| out.flush())
            .map_err(|e| HarnessError::io(path, e))
    } else {
        let mut enc = png::Encoder::new(out, w as u32, h as u32);
        enc.set_color(if c == 1 { png::ColorType::Grayscale } else { png::ColorType::Rgb });
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| HarnessError::format(path, e.to_string()))?;
        writer.write_image_data(&pixels).map_err(|e| HarnessError::format(path, e.to_string()))?;
        writer.finish().map_err(|e| HarnessError::format(path, e.to_string()))
    }
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn to_tensor(shape: Vec<usize>, bytes: &[u8]) -> std::result::Result<Tensor, String> {
    Tensor::new(shape, bytes.iter().map(|&b| f64::from(b) / 255.0).collect()).map_err(|e| e.to_string())
}

fn decode_pgm(bytes: &[u8]) -> std::result::Result<Tensor, String> {
    // header: magic, width, height, maxval, separated by whitespace and
    // `#` comments, then exactly one whitespace byte before the raster
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err("truncated PGM header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field =
            std::str::from_utf8(&bytes[start..pos]).ok().and_then(|s| s.parse().ok()).ok_or("malformed PGM header")?;
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(format!("unsupported PGM maxval {maxval}; only 8-bit (255) is supported"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("malformed PGM header".into());
    }
    let raster = &bytes[pos + 1..];
    if w == 0 || h == 0 || raster.len() < w * h {
        return Err(format!("PGM raster holds {} bytes, expected {w}x{h}", raster.len()));
    }
    to_tensor(vec![h, w], &raster[..w * h])
}

fn decode_png(bytes: &[u8]) -> std::result::Result<Tensor, String> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| format!("PNG: {e}"))?;
    let (color, depth) = reader.output_color_type();
    if depth != png::BitDepth::Eight {
        return Err(format!("unsupported PNG bit depth {depth:?}; only 8-bit is supported"));
    }
    let channels = match color {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return Err(format!("unsupported PNG color type {other:?}; expected grayscale or RGB")),
    };
    let mut buf = vec![0; reader.output_buffer_size().ok_or("PNG: image too large")?];
    let info = reader.next_frame(&mut buf).map_err(|e| format!("PNG: {e}"))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let row = w * channels;
    let mut packed = Vec::with_capacity(h * row);
    for y in 0..h {
        packed.extend_from_slice(&buf[y * info.line_size..y * info.line_size + row]);
    }
    let shape = if channels == 1 { vec![h, w] } else { vec![h, w, 3] };
    to_tensor(shape, &packed)
}
