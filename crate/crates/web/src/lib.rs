//! Browser demo. A tiny denoiser is trained on the page in small chunks
//! (first at σ 20, then its FTN at σ 80), after which the noisy image can be
//! restored at any global α or with a left-to-right α ramp.
//!
//! Everything here runs single-threaded and never reads a clock, so it
//! behaves the same under `wasm32-unknown-unknown` and natively.

use cll_core::train::{train_step, LossKind, Optimizer, OptimizerKind, PhasePlan};
use cll_core::{
    build_network, demo_image, FtnConfig, Level, LevelMap, Network, NetworkSpec, NoiseLevel, Phase,
    ProviderConfig, SyntheticDataset, Tensor, Trainable, ValidationSet,
};
use wasm_bindgen::prelude::*;

const SIGMA_LOW: f64 = 20.0;
const SIGMA_HIGH: f64 = 80.0;
const BATCH: usize = 8;
const PATCH: usize = 24;
const LR: f64 = 1e-3;

fn spec() -> NetworkSpec {
    NetworkSpec {
        channels: 8,
        num_blocks: 2,
        ..NetworkSpec::default()
    }
}

#[wasm_bindgen]
pub struct Demo {
    net: Network<f32>,
    data: SyntheticDataset,
    opt: Optimizer,
    plan: PhasePlan,
    groups: usize,
    phase1_steps: usize,
    phase2_steps: usize,
    done: usize,
    last_loss: f64,
    image: ValidationSet,
    sigma: NoiseLevel,
    noisy: Tensor<f32>,
    last_psnr: f64,
}

fn level(sigma: f64) -> Result<NoiseLevel, String> {
    NoiseLevel::from_8bit(sigma).map_err(|e| e.to_string())
}

fn adam() -> Optimizer {
    Optimizer::new(OptimizerKind::Adam, LR, (0.9, 0.999), 1e-8)
}

/// Grayscale `[1, 1, h, w]` tensor to RGBA bytes.
fn rgba(t: &Tensor<f32>) -> Vec<u8> {
    t.data()
        .iter()
        .flat_map(|&v| {
            let g = cll_core::io::quantize(v);
            [g, g, g, 255]
        })
        .collect()
}

#[wasm_bindgen]
impl Demo {
    /// `groups` is the FTN group count; `size` the side of the demo image.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, groups: u32, size: u32, phase1_steps: u32, phase2_steps: u32) -> Result<Demo, String> {
        let seed = seed as u64;
        if size < 8 || groups == 0 {
            return Err(format!("need size >= 8 and groups >= 1, got {size} and {groups}"));
        }
        let net = build_network(spec(), seed).map_err(|e| e.to_string())?;
        let image = demo_image(seed, 1, None, size as usize);
        let sigma = level(50.0)?;
        let noisy = image.noisy(sigma);
        Ok(Demo {
            net,
            data: SyntheticDataset::new(seed, 1, 0),
            opt: adam(),
            plan: PhasePlan {
                name: "phase1",
                steps: phase1_steps as usize,
                lr: LR,
                sigma: level(SIGMA_LOW)?,
                alpha: 0.0,
                trainable: Trainable::Main,
            },
            groups: groups as usize,
            phase1_steps: phase1_steps as usize,
            phase2_steps: phase2_steps as usize,
            done: 0,
            last_loss: f64::NAN,
            image,
            sigma,
            noisy,
            last_psnr: f64::NAN,
        })
    }

    /// Run up to `steps` training steps, moving on to the FTN once the
    /// first level is finished. Returns the last batch loss.
    pub fn train(&mut self, steps: u32) -> Result<f64, String> {
        for _ in 0..steps {
            if self.done == self.phase1_steps && !self.net.has_providers() {
                self.start_phase2()?;
            }
            if self.finished() {
                break;
            }
            let (noisy, clean) = self.data.sample_batch(BATCH, PATCH, self.plan.sigma);
            let loss = train_step(&mut self.net, &mut self.opt, &noisy, &clean, LossKind::L2, &self.plan)
                .map_err(|e| e.to_string())?;
            if !loss.is_finite() {
                return Err(format!("{} diverged at step {}", self.plan.name, self.done));
            }
            self.last_loss = loss;
            self.done += 1;
        }
        Ok(self.last_loss)
    }

    fn start_phase2(&mut self) -> Result<(), String> {
        let ftn = FtnConfig {
            groups: self.groups,
            ..FtnConfig::default()
        };
        self.net
            .attach_providers(ProviderConfig::ftn(ftn))
            .and_then(|_| self.net.collect_parameters(Phase::Tuning))
            .map_err(|e| e.to_string())?;
        self.data = SyntheticDataset::new(self.data.seed(), 1, 1);
        self.opt = adam();
        self.plan = PhasePlan {
            name: "phase2",
            steps: self.phase2_steps,
            lr: LR,
            sigma: level(SIGMA_HIGH)?,
            alpha: 1.0,
            trainable: Trainable::Tuning,
        };
        Ok(())
    }

    pub fn finished(&self) -> bool {
        self.done >= self.phase1_steps + self.phase2_steps
    }

    /// 1 while learning the first level, 2 for the FTN.
    pub fn phase(&self) -> u32 {
        if self.net.has_providers() {
            2
        } else {
            1
        }
    }

    pub fn steps_done(&self) -> u32 {
        self.done as u32
    }

    pub fn steps_total(&self) -> u32 {
        (self.phase1_steps + self.phase2_steps) as u32
    }

    pub fn status(&self) -> String {
        let state = if self.finished() { "done" } else { self.plan.name };
        format!(
            "{state}: step {}/{}, loss {:.5}",
            self.done,
            self.steps_total(),
            self.last_loss
        )
    }

    pub fn size(&self) -> u32 {
        self.noisy.dims().w as u32
    }

    /// Noise level of the demo image on the 0..255 scale.
    pub fn set_sigma(&mut self, sigma: f64) -> Result<(), String> {
        self.sigma = level(sigma)?;
        self.noisy = self.image.noisy(self.sigma);
        Ok(())
    }

    pub fn clean(&self) -> Vec<u8> {
        rgba(self.image.clean())
    }

    pub fn noisy(&self) -> Vec<u8> {
        rgba(&self.noisy)
    }

    /// Restore at one α for the whole image.
    pub fn denoise(&mut self, alpha: f64) -> Result<Vec<u8>, String> {
        let out = self
            .net
            .forward(&self.noisy, Level::Global(alpha))
            .map_err(|e| e.to_string())?;
        self.finish(out)
    }

    /// Restore with α running linearly from `left` to `right` across the
    /// image.
    pub fn denoise_ramp(&mut self, left: f64, right: f64) -> Result<Vec<u8>, String> {
        let d = self.noisy.dims();
        let map = LevelMap::ramp(d.h, d.w, left, right).map_err(|e| e.to_string())?;
        let out = self
            .net
            .forward(&self.noisy, Level::Map(&map))
            .map_err(|e| e.to_string())?;
        self.finish(out)
    }

    fn finish(&mut self, out: Tensor<f32>) -> Result<Vec<u8>, String> {
        let out = out.map(|v| v.clamp(0.0, 1.0));
        self.last_psnr = cll_core::metrics::psnr(&out, self.image.clean(), 1.0).map_err(|e| e.to_string())?;
        Ok(rgba(&out))
    }

    /// PSNR in dB of the most recent restoration.
    pub fn last_psnr(&self) -> f64 {
        self.last_psnr
    }

    pub fn noisy_psnr(&self) -> f64 {
        let n = self.noisy.map(|v| v.clamp(0.0, 1.0));
        cll_core::metrics::psnr(&n, self.image.clean(), 1.0).unwrap_or(f64::NAN)
    }
}
