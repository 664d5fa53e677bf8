//! File codecs: PNG/PGM images and masks, 16-bit label maps, importance maps.

use std::path::Path;

use image::{ColorType, DynamicImage, ImageEncoder};

use crate::error::{Error, Result};
use crate::superpixel::LabelMap;
use crate::types::{BinaryMask, FloatMap, ImageU8};

/// Magic prefix of raw importance files: `magic, width: u32 LE, height: u32 LE`
/// followed by `width * height` little-endian `f32` values.
pub const IMPORTANCE_MAGIC: [u8; 4] = *b"XIMP";

fn codec(e: impl std::fmt::Display) -> Error {
    Error::Codec(e.to_string())
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("pnm"))
}

/// Decodes PNG or PNM bytes. Color inputs keep three channels; alpha and
/// 16-bit depth are dropped.
pub fn decode_image(bytes: &[u8]) -> Result<ImageU8> {
    let img = image::load_from_memory(bytes).map_err(codec)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        ImageU8::new(w, h, 3, img.to_rgb8().into_raw())
    } else {
        ImageU8::new(w, h, 1, img.to_luma8().into_raw())
    }
}

pub fn read_image(path: &Path) -> Result<ImageU8> {
    decode_image(&std::fs::read(path)?)
}

pub fn encode_png(image: &ImageU8) -> Result<Vec<u8>> {
    let color = if image.channels() == 3 {
        ColorType::Rgb8
    } else {
        ColorType::L8
    };
    let mut buf = Vec::new();
    image::codecs::png::PngEncoder::new(&mut buf)
        .write_image(
            image.data(),
            image.width() as u32,
            image.height() as u32,
            color.into(),
        )
        .map_err(codec)?;
    Ok(buf)
}

pub fn encode_png_rgb(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    encode_png(&ImageU8::new(width, height, 3, rgb.to_vec())?)
}

/// Binary PGM (`P5`, maxval 255) of a grayscale image.
pub fn encode_pgm(image: &ImageU8) -> Result<Vec<u8>> {
    if !image.is_gray() {
        return Err(Error::DimensionMismatch(
            "PGM needs a grayscale image".into(),
        ));
    }
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.data());
    Ok(out)
}

/// Writes PGM for `.pgm`/`.pnm` paths, PNG otherwise.
pub fn write_image(path: &Path, image: &ImageU8) -> Result<()> {
    let bytes = if is_pgm(path) {
        encode_pgm(image)?
    } else {
        encode_png(image)?
    };
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Any nonzero sample becomes 1. Color masks are reduced to luma first.
pub fn decode_mask(bytes: &[u8]) -> Result<BinaryMask> {
    let img = decode_image(bytes)?;
    let gray = crate::preprocess::to_grayscale(&img)?;
    let data = gray.data().iter().map(|&v| u8::from(v != 0)).collect();
    BinaryMask::new(gray.width(), gray.height(), data)
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    decode_mask(&std::fs::read(path)?)
}

/// Mask as 0/255 grayscale.
pub fn mask_to_image(mask: &BinaryMask) -> ImageU8 {
    ImageU8::gray(
        mask.width(),
        mask.height(),
        mask.data().iter().map(|&v| v * 255).collect(),
    )
    .expect("mask dims are valid")
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    write_image(path, &mask_to_image(mask))
}

/// 16-bit binary PGM (`P5`, maxval 65535, big-endian samples).
pub fn encode_labels_pgm16(labels: &LabelMap) -> Result<Vec<u8>> {
    let mut out = format!("P5\n{} {}\n65535\n", labels.width, labels.height).into_bytes();
    for &l in &labels.labels {
        let v = u16::try_from(l)
            .map_err(|_| Error::OutOfRange(format!("label {l} does not fit 16 bits")))?;
        out.extend_from_slice(&v.to_be_bytes());
    }
    Ok(out)
}

pub fn decode_labels_pgm16(bytes: &[u8]) -> Result<LabelMap> {
    let img = image::load_from_memory(bytes).map_err(codec)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let labels: Vec<u32> = match img {
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(u32::from).collect(),
        other => other
            .to_luma8()
            .into_raw()
            .into_iter()
            .map(u32::from)
            .collect(),
    };
    LabelMap::new(w, h, labels)
}

pub fn read_labels(path: &Path) -> Result<LabelMap> {
    decode_labels_pgm16(&std::fs::read(path)?)
}

pub fn encode_importance_raw(map: &FloatMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + map.data().len() * 4);
    out.extend_from_slice(&IMPORTANCE_MAGIC);
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    for &v in map.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Raw `f32` importance file (detected by magic) or a grayscale image read as
/// `value / 255`.
pub fn decode_importance(bytes: &[u8]) -> Result<FloatMap> {
    if bytes.len() >= 12 && bytes[..4] == IMPORTANCE_MAGIC {
        let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[12..];
        if body.len() != w * h * 4 {
            return Err(Error::DimensionMismatch(format!(
                "importance {}x{} needs {} bytes, got {}",
                w,
                h,
                w * h * 4,
                body.len()
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        return FloatMap::new(w, h, data);
    }
    let img = crate::preprocess::to_grayscale(&decode_image(bytes)?)?;
    FloatMap::new(
        img.width(),
        img.height(),
        img.data().iter().map(|&v| f64::from(v) / 255.0).collect(),
    )
}

pub fn read_importance(path: &Path) -> Result<FloatMap> {
    decode_importance(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_and_pgm_round_trip() {
        let img = ImageU8::gray(3, 2, vec![0, 10, 20, 30, 40, 255]).unwrap();
        assert_eq!(decode_image(&encode_png(&img).unwrap()).unwrap(), img);
        assert_eq!(decode_image(&encode_pgm(&img).unwrap()).unwrap(), img);
        let rgb = ImageU8::new(1, 2, 3, vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(decode_image(&encode_png(&rgb).unwrap()).unwrap(), rgb);
    }

    #[test]
    fn mask_nonzero_is_one() {
        let img = ImageU8::gray(3, 1, vec![0, 1, 255]).unwrap();
        let mask = decode_mask(&encode_png(&img).unwrap()).unwrap();
        assert_eq!(mask.data(), &[0, 1, 1]);
    }

    #[test]
    fn labels_pgm16_round_trip() {
        let labels = LabelMap::new(3, 1, vec![0, 1, 40000]).unwrap();
        let bytes = encode_labels_pgm16(&labels).unwrap();
        assert!(bytes.starts_with(b"P5\n3 1\n65535\n"));
        assert_eq!(decode_labels_pgm16(&bytes).unwrap(), labels);
    }

    #[test]
    fn importance_raw_and_png() {
        let map = FloatMap::new(2, 1, vec![0.25, -3.5]).unwrap();
        assert_eq!(
            decode_importance(&encode_importance_raw(&map)).unwrap(),
            map
        );

        let img = ImageU8::gray(2, 1, vec![0, 255]).unwrap();
        let map = decode_importance(&encode_png(&img).unwrap()).unwrap();
        assert_eq!(map.data(), &[0.0, 1.0]);

        let mut bad = encode_importance_raw(&FloatMap::new(2, 2, vec![0.0; 4]).unwrap());
        bad.pop();
        assert!(decode_importance(&bad).is_err());
    }
}
