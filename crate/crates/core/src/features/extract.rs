//! Built-in lightweight extractors: edge-preserving color smoothing and
//! gradient-magnitude edges.

use std::path::Path;

use image::RgbImage;

use super::FeatureMap;
use crate::error::{Error, Result};

const SMOOTH_RADIUS: isize = 2;
const RANGE_SIGMA: f32 = 0.1;
/// Largest central-difference magnitude of a [0, 1] image: sqrt(0.5² + 0.5²).
const MAX_GRADIENT: f32 = std::f32::consts::FRAC_1_SQRT_2;

/// Loads a PNG or binary PPM as 8-bit RGB.
pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path)?.to_rgb8())
}

fn check_nonempty(image: &RgbImage) -> Result<()> {
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::InvalidInput("empty image".into()));
    }
    Ok(())
}

fn scaled_rgb(image: &RgbImage) -> Vec<f32> {
    image.as_raw().iter().map(|&b| b as f32 / 255.0).collect()
}

/// One 1-D range-weighted box pass along x (`horizontal`) or y.
fn range_box_pass(src: &[f32], w: usize, h: usize, horizontal: bool) -> Vec<f32> {
    let inv_two_sigma_sq = 1.0 / (2.0 * RANGE_SIGMA * RANGE_SIGMA);
    let mut out = vec![0.0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            let center = &src[(y * w + x) * 3..(y * w + x) * 3 + 3];
            let mut acc = [0.0f32; 3];
            let mut wsum = 0.0f32;
            for k in -SMOOTH_RADIUS..=SMOOTH_RADIUS {
                let (nx, ny) = if horizontal {
                    (x as isize + k, y as isize)
                } else {
                    (x as isize, y as isize + k)
                };
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let idx = (ny as usize * w + nx as usize) * 3;
                let nb = &src[idx..idx + 3];
                let d2: f32 = nb.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                let weight = (-d2 * inv_two_sigma_sq).exp();
                for c in 0..3 {
                    acc[c] += weight * nb[c];
                }
                wsum += weight;
            }
            // the center always contributes weight 1
            for c in 0..3 {
                out[(y * w + x) * 3 + c] = acc[c] / wsum;
            }
        }
    }
    out
}

/// Edge-preserving smoothing of an RGB image into a 3-channel map in [0, 1].
///
/// Two separable passes (horizontal then vertical) of a radius-2 box filter
/// whose taps are weighted by color similarity to the center pixel.
pub fn extract_smoothed_color(image: &RgbImage) -> Result<FeatureMap> {
    check_nonempty(image)?;
    let (w, h) = (image.width() as usize, image.height() as usize);
    let rgb = scaled_rgb(image);
    let pass = range_box_pass(&rgb, w, h, true);
    let data = range_box_pass(&pass, w, h, false);
    FeatureMap::new(w, h, 3, data)
}

/// Central-difference gradient magnitude of the gray image, normalized to [0, 1].
pub fn extract_edge_magnitude(image: &RgbImage) -> Result<FeatureMap> {
    check_nonempty(image)?;
    let (w, h) = (image.width() as usize, image.height() as usize);
    let rgb = scaled_rgb(image);
    let gray: Vec<f32> = rgb.chunks_exact(3).map(|p| (p[0] + p[1] + p[2]) / 3.0).collect();
    let at = |x: isize, y: isize| {
        let cx = x.clamp(0, w as isize - 1) as usize;
        let cy = y.clamp(0, h as isize - 1) as usize;
        gray[cy * w + cx]
    };
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = 0.5 * (at(x + 1, y) - at(x - 1, y));
            let gy = 0.5 * (at(x, y + 1) - at(x, y - 1));
            data.push(((gx * gx + gy * gy).sqrt() / MAX_GRADIENT).min(1.0));
        }
    }
    FeatureMap::new(w, h, 1, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use proptest::prelude::*;

    fn step_image(w: u32, h: u32, edge: u32) -> RgbImage {
        RgbImage::from_fn(
            w,
            h,
            |x, _| if x < edge { Rgb([0, 0, 0]) } else { Rgb([255, 255, 255]) },
        )
    }

    #[test]
    fn constant_gray() {
        let img = RgbImage::from_pixel(9, 7, Rgb([128, 128, 128]));
        let m = extract_smoothed_color(&img).unwrap();
        for v in m.data() {
            assert!((v - 128.0 / 255.0).abs() < 1e-6);
        }
        let e = extract_edge_magnitude(&img).unwrap();
        assert!(e.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pixel() {
        let img = RgbImage::from_pixel(1, 1, Rgb([10, 200, 30]));
        let m = extract_smoothed_color(&img).unwrap();
        assert_eq!(m.data(), &[10.0 / 255.0, 200.0 / 255.0, 30.0 / 255.0]);
    }

    #[test]
    fn empty_image_rejected() {
        let img = RgbImage::new(0, 4);
        assert!(extract_smoothed_color(&img).is_err());
        assert!(extract_edge_magnitude(&img).is_err());
    }

    #[test]
    fn step_edge_preserved() {
        let img = step_image(16, 6, 8);
        let m = extract_smoothed_color(&img).unwrap();
        let row: Vec<f32> = (0..16).map(|u| m.pixel(u, 3)[0]).collect();
        // transition: columns whose value is strictly between 5% and 95%
        let transition = row.iter().filter(|&&v| v > 0.05 && v < 0.95).count();
        assert!(transition <= 2, "{row:?}");
        assert!(row[7] < 0.5 && row[8] > 0.5, "step moved: {row:?}");
        assert!(row[8] - row[7] >= 0.8);
    }

    #[test]
    fn step_edge_response() {
        let img = step_image(12, 5, 6);
        let e = extract_edge_magnitude(&img).unwrap();
        let row: Vec<f32> = (0..12).map(|u| e.pixel(u, 2)[0]).collect();
        let max = row.iter().cloned().fold(0.0, f32::max);
        assert_eq!(row[5], max);
        assert_eq!(row[6], max);
        assert!(row[0] == 0.0 && row[11] == 0.0);
    }

    #[test]
    fn diagonal_edge_rotation() {
        let img = RgbImage::from_fn(20, 20, |x, y| {
            if x + y < 20 {
                Rgb([20, 40, 60])
            } else {
                Rgb([220, 180, 200])
            }
        });
        let rot = image::imageops::rotate90(&img);
        let a = extract_edge_magnitude(&img).unwrap();
        let b = extract_edge_magnitude(&rot).unwrap();
        let sa: f32 = a.data().iter().sum();
        let sb: f32 = b.data().iter().sum();
        let ma = a.data().iter().cloned().fold(0.0, f32::max);
        let mb = b.data().iter().cloned().fold(0.0, f32::max);
        assert!((sa - sb).abs() <= 0.05 * sa);
        assert!((ma - mb).abs() <= 0.05 * ma);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn outputs_bounded(w in 1u32..12, h in 1u32..12, seed in prop::collection::vec(any::<u8>(), 432)) {
            let img = RgbImage::from_fn(w, h, |x, y| {
                let i = ((y * w + x) * 3) as usize;
                Rgb([seed[i], seed[i + 1], seed[i + 2]])
            });
            let c = extract_smoothed_color(&img).unwrap();
            prop_assert!(c.data().iter().all(|v| v.is_finite() && (-1e-6..=1.0 + 1e-6).contains(v)));
            let e = extract_edge_magnitude(&img).unwrap();
            prop_assert!(e.data().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
        }
    }
}
