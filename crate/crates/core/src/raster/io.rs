//! PNG codecs: 8-bit RGB images and 16-bit grayscale label masks.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use super::{RasterImage, RegionMask};
use crate::error::{Error, Result};

pub fn decode_png(bytes: &[u8]) -> Result<RasterImage> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    from_dynamic(img)
}

/// Reads any PNG as RGB; an alpha channel is dropped.
pub fn read_png(path: &Path) -> Result<RasterImage> {
    from_dynamic(image::open(path)?)
}

fn from_dynamic(img: DynamicImage) -> Result<RasterImage> {
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    RasterImage::new(w, h, rgb.into_raw())
}

pub fn encode_png(image: &RasterImage) -> Result<Vec<u8>> {
    let buf: ImageBuffer<Rgb<u8>, _> = ImageBuffer::from_raw(image.width(), image.height(), image.pixels().to_vec())
        .expect("buffer length checked at construction");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Encodes labels as a single-channel 16-bit PNG (pixel value = label).
pub fn encode_mask_png(mask: &RegionMask) -> Result<Vec<u8>> {
    if mask.region_count() > u16::MAX as u32 + 1 {
        return Err(Error::Contract(format!("{} regions do not fit a 16-bit mask", mask.region_count())));
    }
    let raw: Vec<u16> = mask.labels().iter().map(|&l| l as u16).collect();
    let buf: ImageBuffer<Luma<u16>, _> =
        ImageBuffer::from_raw(mask.width(), mask.height(), raw).expect("length checked");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn decode_mask_png(bytes: &[u8]) -> Result<RegionMask> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    mask_from_dynamic(img)
}

pub fn read_mask_png(path: &Path) -> Result<RegionMask> {
    mask_from_dynamic(image::open(path)?)
}

fn mask_from_dynamic(img: DynamicImage) -> Result<RegionMask> {
    let luma = img.to_luma16();
    let (w, h) = luma.dimensions();
    RegionMask::new(w, h, luma.into_raw().into_iter().map(u32::from).collect())
}
