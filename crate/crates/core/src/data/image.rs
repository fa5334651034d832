//! Binary PPM (P6) and raw-tensor image files, plus bilinear resampling.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Tensor, TENSOR_MAGIC};

/// Load a `[3, R, R]` image with values in `[0, 1]`. PPM samples are divided
/// by the file's maxval; raw tensors are taken as stored. Non-matching sizes
/// are bilinearly resized.
pub fn load_image(path: &Path, resolution: usize) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = decode_image(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::format(format!("{}: {m}", path.display())),
        other => other,
    })?;
    if img.shape()[1] == resolution && img.shape()[2] == resolution {
        Ok(img)
    } else {
        resize_bilinear(&img, resolution, resolution)
    }
}

/// Decode either supported format, chosen by magic bytes.
pub fn decode_image(bytes: &[u8]) -> Result<Tensor> {
    if bytes.starts_with(b"P6") {
        decode_ppm(bytes)
    } else if bytes.starts_with(&TENSOR_MAGIC) {
        let t = Tensor::from_bytes(bytes)?;
        if t.rank() != 3 || t.shape()[0] != 3 {
            return Err(Error::format(format!(
                "raw image tensor must be [3, H, W], got {:?}",
                t.shape()
            )));
        }
        Ok(t)
    } else {
        Err(Error::format("unsupported image format (expected P6 PPM or raw tensor)"))
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n' && c != b'\r') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(format!("PPM header: bad {what}")))
    }
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    if !bytes.starts_with(b"P6") {
        return Err(Error::format("not a binary PPM (missing P6)"));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format("PPM with zero size"));
    }
    if !(1..=65535).contains(&maxval) {
        return Err(Error::format(format!("PPM maxval {maxval} out of range")));
    }
    if !bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format("PPM header not terminated by whitespace"));
    }
    let raster = &bytes[cur.pos + 1..];
    let sample_bytes = if maxval < 256 { 1 } else { 2 };
    let plane = width * height;
    let need = plane * 3 * sample_bytes;
    if raster.len() < need {
        return Err(Error::format(format!(
            "PPM raster truncated: {} of {need} bytes",
            raster.len()
        )));
    }
    let scale = maxval as f64;
    let mut data = vec![0.0; 3 * plane];
    for p in 0..plane {
        for c in 0..3 {
            let i = (p * 3 + c) * sample_bytes;
            let v = if sample_bytes == 1 {
                u32::from(raster[i])
            } else {
                u32::from(u16::from_be_bytes([raster[i], raster[i + 1]]))
            };
            if v as usize > maxval {
                return Err(Error::format(format!("PPM sample {v} exceeds maxval {maxval}")));
            }
            data[c * plane + p] = f64::from(v) / scale;
        }
    }
    Tensor::from_vec(&[3, height, width], data)
}

/// Encode a `[3, H, W]` tensor as an 8-bit P6 file; values are clamped to
/// `[0, 1]` and rounded.
pub fn encode_ppm(img: &Tensor) -> Result<Vec<u8>> {
    let &[3, h, w] = img.shape() else {
        return Err(Error::shape(format!("PPM needs [3, H, W], got {:?}", img.shape())));
    };
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let plane = h * w;
    for p in 0..plane {
        for c in 0..3 {
            let v = img.data()[c * plane + p].clamp(0.0, 1.0);
            out.push((v * 255.0).round() as u8);
        }
    }
    Ok(out)
}

/// Bilinear resize of a `[C, H, W]` tensor with half-pixel sample centers;
/// source coordinates outside the image clamp to the border.
pub fn resize_bilinear(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let &[c, h, w] = img.shape() else {
        return Err(Error::shape(format!("resize needs [C, H, W], got {:?}", img.shape())));
    };
    if out_h == 0 || out_w == 0 {
        return Err(Error::param("resize target must be non-empty"));
    }
    let taps = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        (0..n_out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5)
                    .clamp(0.0, (n_in - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let ys = taps(h, out_h);
    let xs = taps(w, out_w);
    let src = img.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let base = ch * h * w;
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let at = |y: usize, x: usize| src[base + y * w + x];
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    Tensor::from_vec(&[c, out_h, out_w], out)
}
