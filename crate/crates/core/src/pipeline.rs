//! The experiment sequence shared by the command line and the acceptance
//! suite: first level → second level → analyses.

use crate::baselines::finetune_unconstrained;
use crate::config::{Mode, RunConfig};
use crate::data::{NoiseLevel, SyntheticDataset};
use crate::error::{Error, Result};
use crate::ftn::FtnConfig;
use crate::metrics::{self, MacsReport, SimilarityReport, SweepResult};
use crate::model::{build_network, Network, ProviderConfig};
use crate::train::{self, TrainOutcome};

/// Training batch streams of the seeded generator.
pub const STREAM_PHASE1: u32 = 0;
/// Shared by every second-level method so they see the same batches.
pub const STREAM_PHASE2: u32 = 1;
pub const STREAM_SCRATCH: u32 = 2;

fn dataset(cfg: &RunConfig, stream: u32) -> SyntheticDataset {
    SyntheticDataset::new(cfg.seed, cfg.network.in_channels, stream)
}

fn train_config(cfg: &RunConfig) -> train::TrainConfig {
    let mut t = cfg.train.clone();
    t.seed = cfg.seed;
    t
}

/// Fresh network trained on the first level.
pub fn train_first_level(cfg: &RunConfig) -> Result<(Network<f32>, TrainOutcome)> {
    cfg.validate()?;
    let mut net = build_network(cfg.network, cfg.seed)?;
    net.set_alpha_policy(cfg.alpha_policy);
    let out = train::train_phase1(&mut net, &mut dataset(cfg, STREAM_PHASE1), &train_config(cfg))?;
    Ok((net, out))
}

/// Second level for `mode` starting from the first-level network.
pub fn tune(cfg: &RunConfig, phase1: &Network<f32>, mode: Mode) -> Result<(Network<f32>, TrainOutcome)> {
    if phase1.has_providers() {
        return Err(Error::Config("tuning expects a first-level network without providers".into()));
    }
    let tc = train_config(cfg);
    let mut data = dataset(cfg, STREAM_PHASE2);
    match mode.provider_config(cfg.ftn, cfg.exclude_last) {
        None => finetune_unconstrained(phase1, &mut data, &tc),
        Some(providers) => {
            let mut net = phase1.clone();
            net.attach_providers(providers)?;
            let out = train::train_phase2(&mut net, &mut data, &tc)?;
            Ok((net, out))
        }
    }
}

/// A fresh network trained only on `sigma` for `steps` steps.
pub fn train_scratch(cfg: &RunConfig, sigma: NoiseLevel, steps: usize) -> Result<(Network<f32>, TrainOutcome)> {
    let mut net = build_network(cfg.network, cfg.seed)?;
    let out = train::train_from_scratch(&mut net, &mut dataset(cfg, STREAM_SCRATCH), &train_config(cfg), sigma, steps)?;
    Ok((net, out))
}

/// PSNR on the fixed validation set at `sigma` and global level `alpha`.
pub fn validation_psnr(cfg: &RunConfig, net: &Network<f32>, sigma: NoiseLevel, alpha: f64) -> Result<f64> {
    let val = train_config(cfg).validation_set(cfg.network.in_channels);
    train::evaluate_psnr(net, &val, sigma, alpha)
}

fn levels(cfg: &RunConfig) -> Result<Vec<NoiseLevel>> {
    cfg.sweep_sigmas.iter().map(|&s| NoiseLevel::from_8bit(s)).collect()
}

/// α × σ grid for a network with providers.
pub fn sweep_providers(cfg: &RunConfig, net: &Network<f32>) -> Result<SweepResult> {
    if !net.has_providers() {
        return Err(Error::Config("sweep needs a network with providers".into()));
    }
    let val = train_config(cfg).validation_set(cfg.network.in_channels);
    let alphas = metrics::alpha_grid(cfg.sweep_step)?;
    metrics::alpha_sweep(&alphas, &levels(cfg)?, cfg.train.sigma_low, cfg.train.sigma_high, |a, s| {
        train::evaluate_psnr(net, &val, s, a)
    })
}

/// α × σ grid for whole-network interpolation between two plain networks.
pub fn sweep_dni(cfg: &RunConfig, phase1: &Network<f32>, finetuned: &Network<f32>) -> Result<SweepResult> {
    let pair = crate::baselines::DniPair::new(phase1.store(), finetuned.store())?;
    let val = train_config(cfg).validation_set(cfg.network.in_channels);
    let alphas = metrics::alpha_grid(cfg.sweep_step)?;
    metrics::alpha_sweep(&alphas, &levels(cfg)?, cfg.train.sigma_low, cfg.train.sigma_high, |a, s| {
        let net = crate::baselines::dni_network(phase1, &pair, a)?;
        train::evaluate_psnr(&net, &val, s, 0.0)
    })
}

/// First- vs second-level filters of every convolution: the base bank
/// against the bank at α = 1 for provider networks, or the two networks'
/// banks for fine-tuning.
pub fn level_similarity(phase1: &Network<f32>, tuned: &Network<f32>) -> Result<SimilarityReport> {
    if phase1.layers().len() != tuned.layers().len() {
        return Err(Error::IncompatibleStores("networks have different depth".into()));
    }
    let mut triples = Vec::new();
    for (i, (a, b)) in phase1.layers().iter().zip(tuned.layers()).enumerate() {
        let second = if tuned.has_providers() {
            tuned.effective_bank(i, 1.0)?
        } else {
            b.base.clone()
        };
        triples.push((a.name.clone(), a.base.clone(), second));
    }
    metrics::network_similarity(triples)
}

/// Instrumented and modeled tuning costs for the FTN variants and AdaFM on
/// the configured topology.
pub fn macs_table(cfg: &RunConfig) -> Result<MacsReport> {
    let plain: Network<f32> = build_network(cfg.network, cfg.seed)?;
    let size = cfg.macs_size;
    let mut report = metrics::macs_instrumented(&plain, size, size)?;
    let depth = cfg.ftn.depth;
    let variants = [
        ProviderConfig::ftn(FtnConfig { groups: 1, depth }),
        ProviderConfig::ftn(FtnConfig { groups: 4, depth }),
        ProviderConfig::ftn(FtnConfig { groups: 16, depth }),
        ProviderConfig::ftn(FtnConfig { groups: 1, depth: 3 }),
        ProviderConfig::adafm(),
    ];
    for p in variants {
        let mut net = plain.clone();
        net.attach_providers(p)?;
        report.merge(&metrics::macs_instrumented(&net, size, size)?)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        let mut c = RunConfig::default();
        c.network.channels = 4;
        c.network.num_blocks = 1;
        c.train.batch_size = 2;
        c.train.patch_size = 8;
        c.train.phase1_steps = 3;
        c.train.phase2_steps = 2;
        c.train.val_images = 2;
        c.train.val_size = 8;
        c.sweep_step = 0.5;
        c
    }

    #[test]
    fn tiny_pipeline_runs_and_freezes_main_filters() {
        let cfg = tiny();
        let (p1, _) = train_first_level(&cfg).unwrap();
        for mode in Mode::ALL {
            let (t, out) = tune(&cfg, &p1, mode).unwrap();
            assert_eq!(out.steps, 2);
            if mode != Mode::Finetune {
                assert_eq!(t.main_store().digest(), p1.main_store().digest());
                let s = sweep_providers(&cfg, &t).unwrap();
                assert_eq!(s.cells.len(), 3 * 4);
            } else {
                assert_ne!(t.main_store().digest(), p1.main_store().digest());
                assert_eq!(sweep_dni(&cfg, &p1, &t).unwrap().cells.len(), 12);
            }
            let sim = level_similarity(&p1, &t).unwrap();
            assert_eq!(sim.layers.len(), p1.layers().len());
        }
    }

    #[test]
    fn macs_table_has_every_variant() {
        let mut cfg = tiny();
        cfg.network.channels = 16;
        let r = macs_table(&cfg).unwrap();
        for c in [
            "baseline",
            "ftn_g1_n2_exact",
            "ftn_g1_n2_formula",
            "ftn_g16_n2_exact",
            "ftn_g1_n3_exact",
            "adafm_filters_exact",
            "adafm_model",
            "feature_tuning_model",
        ] {
            assert!(r.row(c).is_some(), "{c}");
        }
    }
}
