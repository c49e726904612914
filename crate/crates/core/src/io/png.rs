//! 8-bit RGB PNG ingestion mapped linearly to [-1, 1] and back.

use crate::error::{Error, Result};
use crate::tensor::FeatureMap;
use std::path::Path;

pub fn read_png(path: impl AsRef<Path>) -> Result<FeatureMap> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = FeatureMap::zeros(h, w, 3);
    for (x, y, pixel) in img.enumerate_pixels() {
        for ch in 0..3 {
            let v = pixel.0[ch] as f64 / 255.0 * 2.0 - 1.0;
            out.set(y as usize, x as usize, ch, v);
        }
    }
    Ok(out)
}

pub fn write_png(path: impl AsRef<Path>, map: &FeatureMap) -> Result<()> {
    if map.c != 3 {
        return Err(Error::invalid_argument(format!(
            "png output needs 3 channels, got {}",
            map.c
        )));
    }
    let mut img = image::RgbImage::new(map.w as u32, map.h as u32);
    for y in 0..map.h {
        for x in 0..map.w {
            let mut px = [0u8; 3];
            for ch in 0..3 {
                let v = (map.at(y, x, ch) + 1.0) / 2.0 * 255.0;
                px[ch] = v.round().clamp(0.0, 255.0) as u8;
            }
            img.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    img.save(path.as_ref())
        .map_err(|e| Error::Parse(format!("{}: {e}", path.as_ref().display())))
}
