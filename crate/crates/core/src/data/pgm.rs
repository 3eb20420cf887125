//! Binary 8-bit PGM (P5).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Encode `[H, W]` values in `[0, 1]` as P5 bytes, rounding to 8 bits.
pub fn encode(image: &Tensor<f32>) -> Vec<u8> {
    let (h, w) = match image.shape() {
        [h, w] => (*h, *w),
        s => panic!("expected an [H, W] image, got {s:?}"),
    };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// Decode P5 bytes to `[H, W]` values in `[0, 1]`.
pub fn decode(bytes: &[u8]) -> Result<Tensor<f32>> {
    let bad = |msg: &str| Error::Data(format!("invalid PGM: {msg}"));
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    if fields[0] != "P5" {
        return Err(bad(&format!("magic `{}` is not P5", fields[0])));
    }
    let num = |s: &str, what: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad {what} `{s}`")));
    let (w, h, maxval) = (num(fields[1], "width")?, num(fields[2], "height")?, num(fields[3], "maxval")?);
    if maxval != 255 {
        return Err(bad(&format!("maxval {maxval} (only 8-bit is supported)")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let raster = bytes.get(pos..).unwrap_or_default();
    if raster.len() != w * h {
        return Err(bad(&format!("raster holds {} bytes, expected {w}x{h}", raster.len())));
    }
    Tensor::new([h, w], raster.iter().map(|&b| f32::from(b) / 255.0).collect())
}

pub fn read(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn write(path: &Path, image: &Tensor<f32>) -> Result<()> {
    fs::write(path, encode(image)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact_for_8bit_data() {
        let img = Tensor::from_fn([3, 5], |i| (i * 17 % 256) as f32 / 255.0);
        let back = decode(&encode(&img)).unwrap();
        assert!(back.bit_eq(&img));
        assert_eq!(&encode(&img)[..11], b"P5\n5 3\n255\n");
    }

    #[test]
    fn mask_levels_map_to_unit() {
        let bytes = [b"P5 2 1 255\n".as_slice(), &[255, 0]].concat();
        assert_eq!(decode(&bytes).unwrap().data(), &[1.0, 0.0]);
    }

    #[test]
    fn comments_are_skipped() {
        let bytes = [b"P5\n# made by hand\n1 1\n255\n".as_slice(), &[51]].concat();
        assert_eq!(decode(&bytes).unwrap().data(), &[0.2]);
    }

    #[test]
    fn corrupt_files_fail() {
        assert!(decode(b"P2\n1 1\n255\n0").is_err());
        assert!(decode(b"P5\n2 2\n255\n\x00\x00").is_err());
        assert!(decode(b"P5\n2").is_err());
        assert!(decode(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }
}
