//! 8-bit binary graymap previews, min-max scaled per image.

use std::fs;
use std::io;
use std::path::Path;

use fistanet::tensor::Image2D;

pub fn encode(img: &Image2D) -> Vec<u8> {
    let data = img.as_slice();
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(data.iter().map(|v| {
        if span > 0.0 {
            ((v - lo) / span * 255.0).round() as u8
        } else {
            0
        }
    }));
    out
}

pub fn write(path: impl AsRef<Path>, img: &Image2D) -> io::Result<()> {
    fs::write(path, encode(img))
}
