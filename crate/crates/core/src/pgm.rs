//! Binary greymap (P5, maxval 255) reading and writing.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::GrayImage;

pub fn encode(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.pixels().len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(img.pixels());
    out
}

/// Reads the next whitespace-delimited header token, skipping `#` comments.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Pgm("truncated header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn parse_num(tok: &[u8]) -> Result<usize> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Pgm(format!("bad header number {:?}", String::from_utf8_lossy(tok))))
}

pub fn decode(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    if next_token(bytes, &mut pos)? != b"P5" {
        return Err(Error::Pgm("not a binary PGM (P5)".into()));
    }
    let w = parse_num(next_token(bytes, &mut pos)?)?;
    let h = parse_num(next_token(bytes, &mut pos)?)?;
    let maxval = parse_num(next_token(bytes, &mut pos)?)?;
    if maxval != 255 {
        return Err(Error::Pgm(format!("maxval {maxval} unsupported, expected 255")));
    }
    // exactly one whitespace byte separates header and raster
    pos += 1;
    let need = w * h;
    if bytes.len() < pos + need {
        return Err(Error::Pgm(format!(
            "raster has {} bytes, expected {need}",
            bytes.len().saturating_sub(pos)
        )));
    }
    GrayImage::new(w, h, bytes[pos..pos + need].to_vec())
}

pub fn write(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    fs::write(path, encode(img))?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<GrayImage> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_exact() {
        let img = GrayImage::new(3, 2, vec![0, 1, 2, 253, 254, 255]).unwrap();
        let bytes = encode(&img);
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(&bytes[11..], &[0, 1, 2, 253, 254, 255]);
        assert_eq!(decode(&bytes).unwrap(), img);
    }

    #[test]
    fn comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[10, 32]);
        let img = decode(&bytes).unwrap();
        assert_eq!(img.pixels(), &[10, 32]);
    }

    #[test]
    fn rejects_ascii_and_truncation() {
        assert!(decode(b"P2\n1 1\n255\n0").is_err());
        assert!(decode(b"P5\n4 4\n255\n\x00\x01").is_err());
        assert!(decode(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }
}
