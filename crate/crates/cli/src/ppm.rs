use std::io::Write;
use std::path::Path;

use msmae::{Error, Result, Tensor};

/// 8-bit value of a `[0, 1]` intensity; out-of-range values are clamped.
pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary P6 image of three channels of a `[C, H, W]` tensor, in
/// `(red, green, blue)` order.
pub fn encode_ppm(img: &Tensor, rgb: [usize; 3]) -> Result<Vec<u8>> {
    let &[c, h, w] = img.shape() else {
        return Err(Error::Format(format!("expected [C, H, W], got {:?}", img.shape())));
    };
    if rgb.iter().any(|&ch| ch >= c) {
        return Err(Error::Format(format!("channels {rgb:?} out of range for {c}")));
    }
    let data = img.data();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * h * w);
    for p in 0..h * w {
        for &ch in &rgb {
            out.push(to_byte(data[ch * h * w + p]));
        }
    }
    Ok(out)
}

pub fn write_ppm(path: &Path, img: &Tensor, rgb: [usize; 3]) -> Result<()> {
    let bytes = encode_ppm(img, rgb)?;
    std::fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

/// Parses a P6 file written by [`encode_ppm`]: `(width, height, pixels)`.
pub fn decode_ppm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let bad = || Error::Format("malformed PPM".into());
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad())?.to_string());
    }
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(bad());
    }
    let w: usize = fields[1].parse().map_err(|_| bad())?;
    let h: usize = fields[2].parse().map_err(|_| bad())?;
    let pixels = bytes.get(pos + 1..).ok_or_else(bad)?.to_vec();
    if pixels.len() != 3 * w * h {
        return Err(bad());
    }
    Ok((w, h, pixels))
}
