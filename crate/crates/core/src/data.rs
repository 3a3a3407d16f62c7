//! Procedural training images and Gaussian noise.
//!
//! Clean patches are composites of a smooth gradient, a few random
//! rectangles and a band-limited texture (a sum of low-frequency
//! sinusoids), clamped to `[0, 1]`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const VALIDATION_STREAM: u64 = 1 << 32;
const VALIDATION_NOISE_STREAM: u64 = (1 << 32) + 1;
const DEMO_STREAM: u64 = (1 << 32) + 2;

/// Noise standard deviation on the `[0, 1]` intensity scale.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct NoiseLevel(f64);

impl NoiseLevel {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma.is_finite() && sigma >= 0.0 {
            Ok(NoiseLevel(sigma))
        } else {
            Err(Error::Config(format!("noise level must be >= 0, got {sigma}")))
        }
    }

    /// From the 8-bit scale, e.g. `20.0` → 20/255.
    pub fn from_8bit(sigma: f64) -> Result<Self> {
        Self::new(sigma / 255.0)
    }

    pub fn sigma(self) -> f64 {
        self.0
    }

    pub fn as_8bit(self) -> f64 {
        self.0 * 255.0
    }
}

/// Render one clean patch into `out` laid out as (channels, size, size).
pub fn render_patch<R: Rng>(rng: &mut R, size: usize, channels: usize, out: &mut [f32]) {
    debug_assert_eq!(out.len(), channels * size * size);
    let base: f64 = rng.gen_range(0.2..0.8);
    let gx: f64 = rng.gen_range(-0.3..0.3);
    let gy: f64 = rng.gen_range(-0.3..0.3);

    struct Rect {
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        value: f64,
        opacity: f64,
    }
    let rects: Vec<Rect> = (0..rng.gen_range(1..=4))
        .map(|_| {
            let (a, b): (f64, f64) = (rng.gen(), rng.gen());
            let (c, d): (f64, f64) = (rng.gen(), rng.gen());
            Rect {
                x0: a.min(b),
                x1: a.max(b),
                y0: c.min(d),
                y1: c.max(d),
                value: rng.gen(),
                opacity: rng.gen_range(0.5..1.0),
            }
        })
        .collect();

    struct Wave {
        kx: f64,
        ky: f64,
        phase: f64,
        amp: f64,
    }
    let waves: Vec<Wave> = (0..3)
        .map(|_| {
            let freq: f64 = rng.gen_range(1.0..6.0);
            let theta: f64 = rng.gen_range(0.0..PI);
            Wave {
                kx: 2.0 * PI * freq * theta.cos(),
                ky: 2.0 * PI * freq * theta.sin(),
                phase: rng.gen_range(0.0..2.0 * PI),
                amp: rng.gen_range(0.02..0.1),
            }
        })
        .collect();
    let tints: Vec<f64> = (0..channels)
        .map(|c| if c == 0 { 0.0 } else { rng.gen_range(-0.1..0.1) })
        .collect();

    let scale = 1.0 / size as f64;
    for y in 0..size {
        let v = (y as f64 + 0.5) * scale;
        for x in 0..size {
            let u = (x as f64 + 0.5) * scale;
            let mut p = base + gx * (u - 0.5) + gy * (v - 0.5);
            for r in &rects {
                if u >= r.x0 && u <= r.x1 && v >= r.y0 && v <= r.y1 {
                    p = (1.0 - r.opacity) * p + r.opacity * r.value;
                }
            }
            for w in &waves {
                p += w.amp * (w.kx * u + w.ky * v + w.phase).sin();
            }
            for (c, tint) in tints.iter().enumerate() {
                out[(c * size + y) * size + x] = (p + tint).clamp(0.0, 1.0) as f32;
            }
        }
    }
}

/// Deterministic stream of noisy/clean training batches.
#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    seed: u64,
    channels: usize,
    rng: ChaCha8Rng,
}

impl SyntheticDataset {
    /// Training batches are drawn from `stream` of the generator seeded with
    /// `seed`; validation data uses streams no training stream can reach.
    pub fn new(seed: u64, channels: usize, stream: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        SyntheticDataset { seed, channels, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(noisy, clean)` with `noisy = clean + N(0, σ²)` per pixel, unclamped.
    pub fn sample_batch(
        &mut self,
        batch: usize,
        patch: usize,
        sigma: NoiseLevel,
    ) -> (Tensor<f32>, Tensor<f32>) {
        let per = self.channels * patch * patch;
        let mut clean = Tensor::zeros([batch, self.channels, patch, patch]);
        for chunk in clean.data_mut().chunks_mut(per) {
            render_patch(&mut self.rng, patch, self.channels, chunk);
        }
        let s = sigma.sigma();
        let rng = &mut self.rng;
        let noisy = Tensor::from_fn(clean.dims(), |i| {
            let z: f64 = rng.sample(StandardNormal);
            clean.data()[i] + (s * z) as f32
        });
        (noisy, clean)
    }

    /// Fixed validation images with one shared standard-normal draw, so the
    /// noisy versions at different σ differ only in scale.
    pub fn validation(&self, count: usize, size: usize) -> ValidationSet {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(VALIDATION_STREAM);
        let per = self.channels * size * size;
        let mut clean = Tensor::zeros([count, self.channels, size, size]);
        for chunk in clean.data_mut().chunks_mut(per) {
            render_patch(&mut rng, size, self.channels, chunk);
        }
        let mut nrng = ChaCha8Rng::seed_from_u64(self.seed);
        nrng.set_stream(VALIDATION_NOISE_STREAM);
        let normal = Tensor::from_fn(clean.dims(), |_| nrng.sample::<f64, _>(StandardNormal) as f32);
        ValidationSet { clean, normal }
    }
}

/// A single demo image with its own standard-normal draw: `clean` if given,
/// otherwise a synthetic `size`×`size` image.
pub fn demo_image(seed: u64, channels: usize, clean: Option<Tensor<f32>>, size: usize) -> ValidationSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DEMO_STREAM);
    let clean = clean.unwrap_or_else(|| {
        let mut t = Tensor::zeros([1, channels, size, size]);
        render_patch(&mut rng, size, channels, t.data_mut());
        t
    });
    let normal = Tensor::from_fn(clean.dims(), |_| rng.sample::<f64, _>(StandardNormal) as f32);
    ValidationSet { clean, normal }
}

#[derive(Clone, Debug)]
pub struct ValidationSet {
    clean: Tensor<f32>,
    normal: Tensor<f32>,
}

impl ValidationSet {
    pub fn new(clean: Tensor<f32>, normal: Tensor<f32>) -> Result<Self> {
        crate::tensor::ensure_same_dims("ValidationSet", &clean, &normal)?;
        Ok(ValidationSet { clean, normal })
    }

    pub fn clean(&self) -> &Tensor<f32> {
        &self.clean
    }

    pub fn len(&self) -> usize {
        self.clean.dims().n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn noisy(&self, sigma: NoiseLevel) -> Tensor<f32> {
        let s = sigma.sigma() as f32;
        Tensor::from_fn(self.clean.dims(), |i| self.clean.data()[i] + s * self.normal.data()[i])
    }
}
