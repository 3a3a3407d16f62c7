//! 8-bit PNG (gray or RGB) and binary PGM images as (1, C, H, W) tensors in
//! `[0, 1]`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, ImageError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Png,
    Pgm,
}

fn format_of(path: &Path) -> Result<Format> {
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
        Some(e) if e == "png" => Ok(Format::Png),
        Some(e) if e == "pgm" => Ok(Format::Pgm),
        _ => Err(ImageError::Unsupported(format!("unknown extension on {}", path.display())).into()),
    }
}

/// Clamp to `[0, 1]`, scale to 255 and round half to even.
pub fn quantize(v: f32) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0).round_ties_even() as u8
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let format = format_of(path)?;
    let bytes = fs::read(path)?;
    match format {
        Format::Png => decode_png(&bytes),
        Format::Pgm => decode_pgm(&bytes),
    }
}

/// Write a (1, C, H, W) tensor, C = 1 for PGM and 1 or 3 for PNG.
pub fn write_image(image: &Tensor<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = format_of(path)?;
    let d = image.dims();
    if d.n != 1 {
        return Err(Error::dims("write_image", format!("expected one image, got N = {}", d.n)));
    }
    let pixels = interleave(image);
    match (format, d.c) {
        (Format::Pgm, 1) => {
            let mut out = format!("P5\n{} {}\n255\n", d.w, d.h).into_bytes();
            out.extend_from_slice(&pixels);
            fs::write(path, out)?;
        }
        (Format::Png, 1 | 3) => {
            let w = BufWriter::new(File::create(path)?);
            let mut enc = png::Encoder::new(w, d.w as u32, d.h as u32);
            enc.set_color(if d.c == 1 { png::ColorType::Grayscale } else { png::ColorType::Rgb });
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc
                .write_header()
                .map_err(|e| ImageError::Malformed(e.to_string()))?;
            writer
                .write_image_data(&pixels)
                .map_err(|e| ImageError::Malformed(e.to_string()))?;
        }
        (f, c) => {
            return Err(ImageError::Unsupported(format!("{c}-channel image as {f:?}")).into());
        }
    }
    Ok(())
}

fn interleave(image: &Tensor<f32>) -> Vec<u8> {
    let d = image.dims();
    let mut out = Vec::with_capacity(d.c * d.h * d.w);
    for y in 0..d.h {
        for x in 0..d.w {
            for c in 0..d.c {
                out.push(quantize(image.at(0, c, y, x)));
            }
        }
    }
    out
}

fn planar(pixels: &[u8], channels: usize, h: usize, w: usize) -> Tensor<f32> {
    Tensor::from_fn([1, channels, h, w], |i| {
        let c = i / (h * w);
        let p = i % (h * w);
        pixels[p * channels + c] as f32 / 255.0
    })
}

fn decode_png(bytes: &[u8]) -> Result<Tensor<f32>> {
    let decoder = png::Decoder::new(bytes);
    let mut reader = decoder
        .read_info()
        .map_err(|e| ImageError::Malformed(e.to_string()))?;
    let info = reader.info();
    if info.bit_depth != png::BitDepth::Eight {
        return Err(ImageError::Unsupported(format!("bit depth {:?}", info.bit_depth)).into());
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return Err(ImageError::Unsupported(format!("color type {other:?}")).into()),
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut buf = vec![0; reader.output_buffer_size()];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| ImageError::Malformed(e.to_string()))?;
    let rows = frame.line_size;
    let mut pixels = Vec::with_capacity(w * h * channels);
    for y in 0..h {
        pixels.extend_from_slice(&buf[y * rows..y * rows + w * channels]);
    }
    Ok(planar(&pixels, channels, h, w))
}

fn decode_pgm(bytes: &[u8]) -> Result<Tensor<f32>> {
    let mut pos = 0;
    let mut token = |what: &str| -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(ImageError::Malformed(format!("PGM header ends before {what}")).into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token("magic")?;
    if magic != "P5" {
        return Err(ImageError::Unsupported(format!("PNM variant {magic}")).into());
    }
    let num = |s: String, what: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| ImageError::Malformed(format!("PGM {what} {s:?}")).into())
    };
    let w = num(token("width")?, "width")?;
    let h = num(token("height")?, "height")?;
    let max = num(token("maxval")?, "maxval")?;
    if max != 255 {
        return Err(ImageError::Unsupported(format!("PGM maxval {max}")).into());
    }
    // Exactly one whitespace byte separates the header from the raster.
    let start = pos + 1;
    let end = start + w * h;
    if end > bytes.len() {
        return Err(ImageError::Malformed(format!(
            "PGM raster has {} of {} bytes",
            bytes.len().saturating_sub(start),
            w * h
        ))
        .into());
    }
    Ok(planar(&bytes[start..end], 1, h, w))
}
