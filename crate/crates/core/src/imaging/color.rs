use super::image::{FloatImage, Plane};

/// BT.601 studio-swing luma of a 0–255 RGB image, as MATLAB's `rgb2ycbcr`
/// computes it: `Y = 16 + (65.481·R + 128.553·G + 24.966·B) / 255`.
pub fn rgb_to_y(img: &FloatImage) -> Plane {
    let (r, g, b) = (img.channel(0), img.channel(1), img.channel(2));
    let data = r
        .iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| {
            16.0 + (65.481 * r as f64 + 128.553 * g as f64 + 24.966 * b as f64) / 255.0
        })
        .collect();
    Plane::new(img.width(), img.height(), data).expect("same extent")
}
