//! Dense per-pixel feature maps and grid sampling.

mod extract;
mod fmap;
mod pipeline;

pub use extract::{extract_edge_magnitude, extract_smoothed_color, load_rgb};
pub use fmap::{load_feature_map, save_feature_map, FMAP_HEADER_LEN, FMAP_MAGIC, FMAP_VERSION};
pub use pipeline::{FeatureComponent, FeaturePipeline};

use crate::error::{Error, Result};

/// A dense feature image, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidInput("feature map needs at least one channel".into()));
        }
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite feature value at element {i}")));
        }
        Ok(FeatureMap {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        assert!(channels > 0);
        FeatureMap {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Feature values at pixel `(u, v)`.
    pub fn pixel(&self, u: usize, v: usize) -> &[f32] {
        let start = (v * self.width + u) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn pixel_mut(&mut self, u: usize, v: usize) -> &mut [f32] {
        let start = (v * self.width + u) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    pub fn vector_at(&self, u: usize, v: usize) -> FeatureVector {
        FeatureVector(self.pixel(u, v).to_vec())
    }

    /// Applies per-channel standardization to every pixel.
    pub fn standardized(&self, stats: &ChannelStats) -> Result<FeatureMap> {
        if stats.dim() != self.channels {
            return Err(Error::DimensionMismatch {
                expected: stats.dim(),
                actual: self.channels,
            });
        }
        let mut out = self.clone();
        for px in out.data.chunks_exact_mut(self.channels) {
            stats.apply_in_place(px);
        }
        Ok(out)
    }
}

/// A single feature vector sampled from a map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f32>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| v as f64).collect()
    }
}

/// Regular sampling grid in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub interval: usize,
    pub margin: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            interval: 16,
            margin: 8,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.interval == 0 {
            return Err(Error::InvalidInput("grid interval must be >= 1".into()));
        }
        Ok(())
    }

    /// Sample coordinates along one axis of length `len`: `margin + k * interval`,
    /// keeping positions that lie inside the image and at most `len - margin`.
    pub fn positions(&self, len: usize) -> impl Iterator<Item = usize> + '_ {
        let interval = self.interval.max(1);
        (self.margin..len)
            .step_by(interval)
            .take_while(move |&p| p + self.margin <= len)
    }

    /// Row-major `(u, v)` sample positions for an image of the given size.
    pub fn pixels(&self, width: usize, height: usize) -> Vec<(usize, usize)> {
        let us: Vec<usize> = self.positions(width).collect();
        self.positions(height)
            .flat_map(|v| us.iter().map(move |&u| (u, v)))
            .collect()
    }
}

/// Concatenates channels of same-sized maps in input order.
pub fn stack_feature_maps(maps: &[FeatureMap]) -> Result<FeatureMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidInput("nothing to stack".into()))?;
    let (w, h) = (first.width, first.height);
    for m in maps {
        if m.width != w || m.height != h {
            return Err(Error::InvalidInput(format!(
                "cannot stack {}x{} map with {}x{} map",
                m.width, m.height, w, h
            )));
        }
    }
    let channels: usize = maps.iter().map(|m| m.channels).sum();
    let mut data = Vec::with_capacity(w * h * channels);
    for px in 0..w * h {
        for m in maps {
            data.extend_from_slice(&m.data[px * m.channels..(px + 1) * m.channels]);
        }
    }
    Ok(FeatureMap {
        width: w,
        height: h,
        channels,
        data,
    })
}

/// Samples a map on a grid, row-major.
pub fn sample_grid(map: &FeatureMap, grid: &GridSpec) -> Vec<((usize, usize), FeatureVector)> {
    grid.pixels(map.width, map.height)
        .into_iter()
        .map(|(u, v)| ((u, v), map.vector_at(u, v)))
        .collect()
}

/// Per-channel mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// Stats that leave values unchanged.
    pub fn identity(dim: usize) -> Self {
        ChannelStats {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn from_samples<'a>(dim: usize, samples: impl IntoIterator<Item = &'a [f32]>) -> Self {
        let mut sum = vec![0.0f64; dim];
        let mut sum_sq = vec![0.0f64; dim];
        let mut n = 0usize;
        for s in samples {
            for (c, &v) in s.iter().enumerate() {
                sum[c] += v as f64;
                sum_sq[c] += (v as f64) * (v as f64);
            }
            n += 1;
        }
        if n == 0 {
            return Self::identity(dim);
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let std = sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| {
                let var = (sq / nf - m * m).max(0.0);
                let sd = var.sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        ChannelStats { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_in_place(&self, values: &mut [f32]) {
        for ((v, m), s) in values.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = ((*v as f64 - m) / s) as f32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize, c: usize, offset: f32) -> FeatureMap {
        let data = (0..w * h * c).map(|i| i as f32 + offset).collect();
        FeatureMap::new(w, h, c, data).unwrap()
    }

    #[test]
    fn rejects_bad_maps() {
        assert!(FeatureMap::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(FeatureMap::new(1, 1, 0, vec![]).is_err());
        assert!(FeatureMap::new(1, 1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn stacking() {
        let a = ramp(4, 4, 3, 0.0);
        let b = ramp(4, 4, 1, 100.0);
        let c = ramp(4, 4, 21, 1000.0);
        let s = stack_feature_maps(&[a.clone(), b.clone(), c]).unwrap();
        assert_eq!(s.channels(), 25);
        assert_eq!(stack_feature_maps(std::slice::from_ref(&a)).unwrap(), a);
        let ab = stack_feature_maps(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(ab.data().len(), 4 * 4 * 4);
        assert_eq!(&ab.pixel(1, 2)[..3], a.pixel(1, 2));
        assert_eq!(&ab.pixel(1, 2)[3..], b.pixel(1, 2));
        assert!(stack_feature_maps(&[a, ramp(3, 4, 1, 0.0)]).is_err());
        assert!(stack_feature_maps(&[]).is_err());
    }

    #[test]
    fn grid_counts() {
        let m = FeatureMap::zeros(100, 80, 1);
        let g = GridSpec {
            interval: 16,
            margin: 8,
        };
        let s = sample_grid(&m, &g);
        assert_eq!(s.len(), 30);
        let us: Vec<usize> = g.positions(100).collect();
        let vs: Vec<usize> = g.positions(80).collect();
        assert_eq!(us, vec![8, 24, 40, 56, 72, 88]);
        assert_eq!(vs, vec![8, 24, 40, 56, 72]);
        // row-major
        assert_eq!(s[0].0, (8, 8));
        assert_eq!(s[1].0, (24, 8));
        assert_eq!(s[6].0, (8, 24));

        let big = GridSpec {
            interval: 500,
            margin: 0,
        };
        assert!(sample_grid(&m, &big).len() <= 1);
        let full = GridSpec { interval: 1, margin: 0 };
        assert_eq!(sample_grid(&m, &full).len(), 100 * 80);
        let wide = GridSpec {
            interval: 4,
            margin: 60,
        };
        assert!(sample_grid(&m, &wide).is_empty());
    }

    #[test]
    fn stats_standardize() {
        let samples: Vec<Vec<f32>> = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let st = ChannelStats::from_samples(2, samples.iter().map(|v| v.as_slice()));
        assert_eq!(st.mean, vec![2.0, 5.0]);
        assert_eq!(st.std, vec![1.0, 1.0]); // constant channel falls back to unit scale
        let mut v = [3.0f32, 6.0];
        st.apply_in_place(&mut v);
        assert_eq!(v, [1.0, 1.0]);
    }
}
