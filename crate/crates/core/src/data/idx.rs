//! IDX image/label files (big-endian headers, unsigned byte payloads).

use std::path::Path;

use crate::data::ImageSample;
use crate::error::{LanError, Result};
use crate::io::{read_file, write_atomic};
use crate::tensor::Tensor;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize, origin: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| LanError::format(origin, offset as u64, "truncated header"))
}

fn parse_images(bytes: &[u8], origin: &str) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0, origin)?;
    if magic != IMAGE_MAGIC {
        return Err(LanError::format(
            origin,
            0,
            format!("bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"),
        ));
    }
    let n = be_u32(bytes, 4, origin)? as usize;
    let rows = be_u32(bytes, 8, origin)? as usize;
    let cols = be_u32(bytes, 12, origin)? as usize;
    let need = 16 + n * rows * cols;
    if bytes.len() < need {
        return Err(LanError::format(
            origin,
            bytes.len() as u64,
            format!("truncated pixel data: need {need} bytes"),
        ));
    }
    Ok((n, rows, cols, bytes[16..need].to_vec()))
}

fn parse_labels(bytes: &[u8], origin: &str) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, origin)?;
    if magic != LABEL_MAGIC {
        return Err(LanError::format(
            origin,
            0,
            format!("bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"),
        ));
    }
    let n = be_u32(bytes, 4, origin)? as usize;
    if bytes.len() < 8 + n {
        return Err(LanError::format(
            origin,
            bytes.len() as u64,
            format!("truncated labels: need {} bytes", 8 + n),
        ));
    }
    let labels = bytes[8..8 + n].to_vec();
    if let Some(pos) = labels.iter().position(|&l| l > 9) {
        return Err(LanError::format(
            origin,
            (8 + pos) as u64,
            format!("label {} outside 0..9", labels[pos]),
        ));
    }
    Ok(labels)
}

/// Decodes an image file and a label file already in memory. Errors name
/// `origins.0` or `origins.1` respectively.
pub fn decode_idx(images: &[u8], labels: &[u8], origins: (&str, &str)) -> Result<Vec<ImageSample>> {
    let (n, rows, cols, pixels) = parse_images(images, origins.0)?;
    let labels = parse_labels(labels, origins.1)?;
    if labels.len() != n {
        return Err(LanError::format(
            origins.1,
            4,
            format!("{n} images but {} labels", labels.len()),
        ));
    }
    pixels
        .chunks(rows * cols)
        .zip(labels)
        .map(|(px, label)| {
            let data = px.iter().map(|&b| b as f32 / 255.0).collect();
            ImageSample::new(Tensor::new(vec![1, rows, cols], data)?, label as usize, Vec::new())
        })
        .collect()
}

/// Loads an IDX image/label pair, scaling pixels to `[0,1]`.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Vec<ImageSample>> {
    let img = read_file(images)?;
    let lab = read_file(labels)?;
    decode_idx(
        &img,
        &lab,
        (&images.display().to_string(), &labels.display().to_string()),
    )
}

/// Encodes `(1,H,W)` images (quantised to bytes) and labels as IDX files.
pub fn encode_idx(samples: &[ImageSample]) -> Result<(Vec<u8>, Vec<u8>)> {
    let first = samples
        .first()
        .ok_or_else(|| LanError::Contract("no samples to encode".into()))?;
    let (h, w) = (first.height(), first.width());
    let mut img = Vec::with_capacity(16 + samples.len() * h * w);
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&(samples.len() as u32).to_be_bytes());
    img.extend_from_slice(&(h as u32).to_be_bytes());
    img.extend_from_slice(&(w as u32).to_be_bytes());
    let mut lab = Vec::with_capacity(8 + samples.len());
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(samples.len() as u32).to_be_bytes());
    for s in samples {
        if s.height() != h || s.width() != w {
            return Err(LanError::shape("idx", "images differ in size"));
        }
        img.extend(s.pixels.data().iter().map(|&v| (v * 255.0).round() as u8));
        lab.push(s.label as u8);
    }
    Ok((img, lab))
}

pub fn write_idx(samples: &[ImageSample], images: &Path, labels: &Path) -> Result<()> {
    let (img, lab) = encode_idx(samples)?;
    write_atomic(images, &img)?;
    write_atomic(labels, &lab)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn files() -> (Vec<u8>, Vec<u8>) {
        let mut img = Vec::new();
        img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&28u32.to_be_bytes());
        img.extend_from_slice(&28u32.to_be_bytes());
        img.extend(std::iter::repeat(0u8).take(784));
        img.extend(std::iter::repeat(255u8).take(784));
        let mut lab = Vec::new();
        lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        lab.extend_from_slice(&2u32.to_be_bytes());
        lab.extend_from_slice(&[3, 9]);
        (img, lab)
    }

    #[test]
    fn decodes_and_normalises() {
        let (img, lab) = files();
        assert_eq!(&img[..4], &[0, 0, 8, 3]);
        assert_eq!(&lab[..4], &[0, 0, 8, 1]);
        let samples = decode_idx(&img, &lab, ("mem", "mem")).unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[1].pixels.shape(), &[1, 28, 28]);
        assert_eq!(samples[1].pixels.data()[0], 1.0);
        assert_eq!(samples[0].label, 3);
        assert_eq!(samples[1].label, 9);
    }

    #[test]
    fn format_errors() {
        let (img, lab) = files();
        let mut bad = img.clone();
        bad[3] = 0x01;
        assert!(decode_idx(&bad, &lab, ("mem", "mem")).unwrap_err().to_string().contains("magic"));
        let err = decode_idx(&img[..100], &lab, ("mem", "mem")).unwrap_err();
        assert!(err.to_string().contains("truncated"));
        let mut short = lab.clone();
        short[7] = 1;
        short.truncate(9);
        assert!(decode_idx(&img, &short, ("mem", "mem")).unwrap_err().to_string().contains("labels"));
    }

    #[test]
    fn encode_roundtrip() {
        let (img, lab) = files();
        let samples = decode_idx(&img, &lab, ("mem", "mem")).unwrap();
        let (img2, lab2) = encode_idx(&samples).unwrap();
        assert_eq!(img, img2);
        assert_eq!(lab, lab2);
    }
}
