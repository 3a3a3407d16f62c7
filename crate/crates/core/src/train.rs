//! Two-phase training: first level with the main network, then the second
//! level through the providers with the main network frozen.

use std::collections::HashMap;
use std::time::Instant;

use log::{debug, info};

use crate::data::{NoiseLevel, SyntheticDataset, ValidationSet};
use crate::error::{Error, Result};
use crate::metrics::psnr;
use crate::model::{Level, Network, Phase, Trainable};
use crate::tape::Tape;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    L1,
    L2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    /// Plain gradient descent, used for hand-checkable runs.
    Sgd,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub patch_size: usize,
    pub phase1_steps: usize,
    pub phase2_steps: usize,
    pub lr_phase1: f64,
    pub lr_phase2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
    pub sigma_low: NoiseLevel,
    pub sigma_high: NoiseLevel,
    pub val_images: usize,
    pub val_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            batch_size: 16,
            patch_size: 32,
            phase1_steps: 3000,
            phase2_steps: 1500,
            lr_phase1: 1e-3,
            lr_phase2: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            loss: LossKind::L2,
            optimizer: OptimizerKind::Adam,
            sigma_low: NoiseLevel::from_8bit(20.0).expect("positive"),
            sigma_high: NoiseLevel::from_8bit(80.0).expect("positive"),
            val_images: 16,
            val_size: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("patch_size", self.patch_size),
            ("val_images", self.val_images),
            ("val_size", self.val_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, lr) in [("lr_phase1", self.lr_phase1), ("lr_phase2", self.lr_phase2)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 0, got {lr}")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("Adam eps must be positive".into()));
        }
        Ok(())
    }

    pub fn validation_set(&self, channels: usize) -> ValidationSet {
        SyntheticDataset::new(self.seed, channels, 0).validation(self.val_images, self.val_size)
    }
}

/// First and second moment estimates of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `param` in place. Moments are kept in
/// double precision.
pub fn adam_step<T: Scalar>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    state: &mut AdamState,
    lr: f64,
    betas: (f64, f64),
    eps: f64,
) -> Result<()> {
    if param.dims() != grad.dims() || state.m.len() != param.numel() {
        return Err(Error::dims(
            "adam_step",
            format!("param {} vs grad {}", param.dims(), grad.dims()),
        ));
    }
    grad.validate_finite("adam_step: gradient")?;
    let (b1, b2) = betas;
    state.t += 1;
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (i, p) in param.data_mut().iter_mut().enumerate() {
        let g = grad.data()[i].as_f64();
        let m = b1 * state.m[i] + (1.0 - b1) * g;
        let v = b2 * state.v[i] + (1.0 - b2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        let update = lr * (m / c1) / ((v / c2).sqrt() + eps);
        *p = T::of(p.as_f64() - update);
    }
    Ok(())
}

/// Optimizer state for a set of named parameters.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    betas: (f64, f64),
    eps: f64,
    state: HashMap<String, AdamState>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, betas: (f64, f64), eps: f64) -> Self {
        Optimizer {
            kind,
            lr,
            betas,
            eps,
            state: HashMap::new(),
        }
    }

    pub fn step<T: Scalar>(&mut self, name: &str, param: &mut Tensor<T>, grad: &Tensor<T>) -> Result<()> {
        match self.kind {
            OptimizerKind::Adam => {
                let state = self
                    .state
                    .entry(name.to_string())
                    .or_insert_with(|| AdamState::new(param.numel()));
                adam_step(param, grad, state, self.lr, self.betas, self.eps)
            }
            OptimizerKind::Sgd => {
                grad.validate_finite("sgd: gradient")?;
                for (p, g) in param.data_mut().iter_mut().zip(grad.data()) {
                    *p = T::of(p.as_f64() - self.lr * g.as_f64());
                }
                Ok(())
            }
        }
    }
}

/// Result of one training phase.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub phase: &'static str,
    pub steps: usize,
    pub sigma: NoiseLevel,
    pub alpha: f64,
    /// Training loss at every step.
    pub losses: Vec<f64>,
    /// Validation PSNR at the phase's level before the first step.
    pub initial_val_psnr: f64,
    pub final_val_psnr: f64,
    pub seconds: f64,
}

impl TrainOutcome {
    /// `step,loss` CSV with a header line.
    pub fn loss_csv(&self) -> String {
        let mut s = String::from("step,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            s.push_str(&format!("{i},{l:.8}\n"));
        }
        s
    }
}

/// Everything a phase needs besides the network and the data.
#[derive(Clone, Debug)]
pub struct PhasePlan {
    pub name: &'static str,
    pub steps: usize,
    pub lr: f64,
    pub sigma: NoiseLevel,
    pub alpha: f64,
    pub trainable: Trainable,
}

/// Mean per-image PSNR of `net` on `val` at noise level `sigma`.
pub fn evaluate_psnr(net: &Network<f32>, val: &ValidationSet, sigma: NoiseLevel, alpha: f64) -> Result<f64> {
    evaluate_psnr_with(val, sigma, |x| net.forward(x, Level::Global(alpha)))
}

/// As [`evaluate_psnr`] for an arbitrary denoiser.
pub fn evaluate_psnr_with(
    val: &ValidationSet,
    sigma: NoiseLevel,
    denoise: impl Fn(&Tensor<f32>) -> Result<Tensor<f32>>,
) -> Result<f64> {
    let noisy = val.noisy(sigma);
    let d = noisy.dims();
    let per = d.c * d.h * d.w;
    const CHUNK: usize = 4;
    let mut total = 0.0;
    let mut start = 0;
    while start < d.n {
        let n = CHUNK.min(d.n - start);
        let slice = |t: &Tensor<f32>| {
            Tensor::new([n, d.c, d.h, d.w], t.data()[start * per..(start + n) * per].to_vec())
                .expect("chunk dims")
        };
        let out = denoise(&slice(&noisy))?;
        let clean = slice(val.clean());
        for i in 0..n {
            let p = Tensor::new([1, d.c, d.h, d.w], out.data()[i * per..(i + 1) * per].to_vec())?;
            let t = Tensor::new([1, d.c, d.h, d.w], clean.data()[i * per..(i + 1) * per].to_vec())?;
            total += psnr(&p, &t, 1.0)?;
        }
        start += n;
    }
    Ok(total / d.n as f64)
}

/// Run `plan` on `net`, updating only the parameters selected by
/// `plan.trainable`.
pub fn run_phase(
    net: &mut Network<f32>,
    dataset: &mut SyntheticDataset,
    config: &TrainConfig,
    plan: &PhasePlan,
) -> Result<TrainOutcome> {
    config.validate()?;
    let started = Instant::now();
    let val = config.validation_set(net.spec().in_channels);
    let initial_val_psnr = evaluate_psnr(net, &val, plan.sigma, plan.alpha)?;
    let mut opt = Optimizer::new(config.optimizer, plan.lr, (config.beta1, config.beta2), config.eps);
    let mut losses = Vec::with_capacity(plan.steps);
    for step in 0..plan.steps {
        let (noisy, clean) = dataset.sample_batch(config.batch_size, config.patch_size, plan.sigma);
        let loss = train_step(net, &mut opt, &noisy, &clean, config.loss, plan)
            .map_err(|e| match e {
                Error::NonFinite(_) => Error::Diverged {
                    phase: plan.name,
                    step,
                    loss: f64::NAN,
                },
                other => other,
            })?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                phase: plan.name,
                step,
                loss,
            });
        }
        if step % 250 == 0 {
            debug!("{} step {step}: loss {loss:.6}", plan.name);
        }
        losses.push(loss);
    }
    let final_val_psnr = evaluate_psnr(net, &val, plan.sigma, plan.alpha)?;
    let seconds = started.elapsed().as_secs_f64();
    info!(
        "{}: {} steps in {seconds:.1}s, val PSNR {initial_val_psnr:.3} -> {final_val_psnr:.3} dB",
        plan.name, plan.steps
    );
    Ok(TrainOutcome {
        phase: plan.name,
        steps: plan.steps,
        sigma: plan.sigma,
        alpha: plan.alpha,
        losses,
        initial_val_psnr,
        final_val_psnr,
        seconds,
    })
}

/// Forward, backward and one optimizer update. Returns the batch loss.
pub fn train_step(
    net: &mut Network<f32>,
    opt: &mut Optimizer,
    noisy: &Tensor<f32>,
    clean: &Tensor<f32>,
    loss: LossKind,
    plan: &PhasePlan,
) -> Result<f64> {
    let mut tape = Tape::new();
    let x = tape.constant(noisy.clone());
    let target = tape.constant(clean.clone());
    let rec = net.record(&mut tape, x, Level::Global(plan.alpha), plan.trainable)?;
    let l = match loss {
        LossKind::L1 => tape.loss_l1(rec.output, target)?,
        LossKind::L2 => tape.loss_l2(rec.output, target)?,
    };
    let value = tape.value(l).item() as f64;
    if !value.is_finite() {
        return Ok(value);
    }
    let mut grads = tape.backward(l)?;
    let by_name: HashMap<&str, crate::tape::Var> =
        rec.params.iter().map(|(n, v)| (n.as_str(), *v)).collect();
    for (name, _, param) in net.named_params_mut() {
        let Some(&var) = by_name.get(name.as_str()) else { continue };
        if let Some(g) = grads.take(var) {
            opt.step(&name, param, &g)?;
        }
    }
    Ok(value)
}

/// First level: main filters only, α = 0, noise `sigma_low`.
pub fn train_phase1(
    net: &mut Network<f32>,
    dataset: &mut SyntheticDataset,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let plan = PhasePlan {
        name: "phase1",
        steps: config.phase1_steps,
        lr: config.lr_phase1,
        sigma: config.sigma_low,
        alpha: 0.0,
        trainable: Trainable::Main,
    };
    run_phase(net, dataset, config, &plan)
}

/// Second level: providers only, α = 1, noise `sigma_high`.
pub fn train_phase2(
    net: &mut Network<f32>,
    dataset: &mut SyntheticDataset,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    net.collect_parameters(Phase::Tuning)?;
    let plan = PhasePlan {
        name: "phase2",
        steps: config.phase2_steps,
        lr: config.lr_phase2,
        sigma: config.sigma_high,
        alpha: 1.0,
        trainable: Trainable::Tuning,
    };
    run_phase(net, dataset, config, &plan)
}

/// Every main parameter on `sigma_high` with the phase-2 budget and rate.
pub fn run_finetune(
    net: &mut Network<f32>,
    dataset: &mut SyntheticDataset,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let plan = PhasePlan {
        name: "finetune",
        steps: config.phase2_steps,
        lr: config.lr_phase2,
        sigma: config.sigma_high,
        alpha: 0.0,
        trainable: Trainable::Main,
    };
    run_phase(net, dataset, config, &plan)
}

/// A fresh network trained only on `sigma` for `steps` steps at the
/// phase-1 learning rate.
pub fn train_from_scratch(
    net: &mut Network<f32>,
    dataset: &mut SyntheticDataset,
    config: &TrainConfig,
    sigma: NoiseLevel,
    steps: usize,
) -> Result<TrainOutcome> {
    let plan = PhasePlan {
        name: "scratch",
        steps,
        lr: config.lr_phase1,
        sigma,
        alpha: 0.0,
        trainable: Trainable::Main,
    };
    run_phase(net, dataset, config, &plan)
}
