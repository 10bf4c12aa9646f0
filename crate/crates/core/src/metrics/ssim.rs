//! Windowed structural similarity with a Gaussian window.

use alloc::vec;
use alloc::vec::Vec;

// Required for the no_std build; std builds resolve these methods inherently.
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::data::ImageSample;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    /// Window edge length in pixels; odd, at most min(height, width).
    pub window_size: usize,
    pub gaussian_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    /// 7x7 window instead of the classic 11x11: the bundled images are small.
    fn default() -> Self {
        SsimParams { window_size: 7, gaussian_sigma: 1.5, k1: 0.01, k2: 0.03, dynamic_range: 1.0 }
    }
}

impl SsimParams {
    fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.window_size % 2 == 0 || self.window_size == 0 {
            return Err(Error::config("SSIM window size must be odd"));
        }
        if self.window_size > height.min(width) {
            return Err(Error::config("SSIM window larger than image"));
        }
        if self.k1 <= 0.0 || self.k2 <= 0.0 || self.dynamic_range <= 0.0 {
            return Err(Error::config("SSIM stabilizers and dynamic range must be positive"));
        }
        Ok(())
    }

    fn kernel(&self) -> Vec<f64> {
        let n = self.window_size;
        let half = (n / 2) as f64;
        let s2 = 2.0 * self.gaussian_sigma * self.gaussian_sigma;
        let mut k: Vec<f64> = (0..n).map(|i| (-((i as f64 - half) * (i as f64 - half)) / s2).exp()).collect();
        let sum: f64 = k.iter().sum();
        for v in &mut k {
            *v /= sum;
        }
        k
    }
}

/// Mean SSIM over all fully-contained windows, averaged across channels.
pub fn ssim(a: &ImageSample, b: &ImageSample, p: &SsimParams) -> Result<f64> {
    if a.shape != b.shape {
        return Err(Error::config("SSIM requires identical image shapes"));
    }
    let (d, h, w) = (a.shape.depth, a.shape.height, a.shape.width);
    p.validate(h, w)?;
    let kernel = p.kernel();
    let c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    let c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);

    let mut total = 0.0;
    for ch in 0..d {
        let base = ch * h * w;
        let ax: Vec<f64> = a.pixels[base..base + h * w].iter().map(|&v| v as f64).collect();
        let bx: Vec<f64> = b.pixels[base..base + h * w].iter().map(|&v| v as f64).collect();
        let axbx: Vec<f64> = ax.iter().zip(&bx).map(|(x, y)| x * y).collect();
        let ax2: Vec<f64> = ax.iter().map(|x| x * x).collect();
        let bx2: Vec<f64> = bx.iter().map(|y| y * y).collect();

        let mu_a = filter_valid(&ax, h, w, &kernel);
        let mu_b = filter_valid(&bx, h, w, &kernel);
        let e_ab = filter_valid(&axbx, h, w, &kernel);
        let e_a2 = filter_valid(&ax2, h, w, &kernel);
        let e_b2 = filter_valid(&bx2, h, w, &kernel);

        let mut sum = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_a2[i] - ma * ma;
            let vb = e_b2[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += sum / mu_a.len() as f64;
    }
    Ok(total / d as f64)
}

/// Separable Gaussian filter over valid positions (no padding).
fn filter_valid(img: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let n = kernel.len();
    let ow = w - n + 1;
    let oh = h - n + 1;
    // horizontal pass
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            let mut s = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                s += k * img[y * w + x + i];
            }
            tmp[y * ow + x] = s;
        }
    }
    // vertical pass
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut s = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                s += k * tmp[(y + i) * ow + x];
            }
            out[y * ow + x] = s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ImageShape, SampleId};
    use crate::rng::Stream;
    use rand::Rng;

    fn random_image(id: u32, h: usize, w: usize, seed: u64) -> ImageSample {
        let mut rng = Stream::new(seed).rng();
        let pixels = (0..h * w).map(|_| rng.random_range(0.0..1.0)).collect();
        ImageSample::new(SampleId(id), 0, ImageShape { depth: 1, height: h, width: w }, pixels).unwrap()
    }

    #[test]
    fn identity_is_exactly_one() {
        let img = random_image(0, 12, 12, 3);
        assert_eq!(ssim(&img, &img, &SsimParams::default()).unwrap(), 1.0);
    }

    #[test]
    fn symmetric_and_bounded() {
        for seed in 0..5 {
            let a = random_image(0, 10, 10, seed);
            let b = random_image(1, 10, 10, seed + 100);
            let p = SsimParams::default();
            let ab = ssim(&a, &b, &p).unwrap();
            let ba = ssim(&b, &a, &p).unwrap();
            assert_eq!(ab, ba);
            assert!((-1.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = random_image(0, 10, 10, 1);
        let b = random_image(1, 12, 12, 2);
        assert!(ssim(&a, &b, &SsimParams::default()).is_err());
    }
}
