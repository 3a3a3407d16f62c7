use rayon::prelude::*;

use crate::data::NoiseLevel;
use crate::error::{Error, Result};

/// `0, step, 2·step, …, 1` with the endpoints exact.
pub fn alpha_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Range { what: "alpha grid step", value: step });
    }
    let n = (1.0 / step).round() as usize;
    if ((n as f64) * step - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("alpha grid step {step} does not divide 1")));
    }
    Ok((0..=n).map(|i| i as f64 / n as f64).collect())
}

/// Where the level line puts `sigma` between the two training levels.
pub fn ideal_alpha(sigma: f64, sigma_low: f64, sigma_high: f64) -> f64 {
    (sigma - sigma_low) / (sigma_high - sigma_low)
}

/// First α attaining the highest PSNR.
pub fn argmax_alpha(alphas: &[f64], psnrs: &[f64]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for (&a, &p) in alphas.iter().zip(psnrs) {
        if best.map_or(true, |(_, bp)| p > bp) {
            best = Some((a, p));
        }
    }
    best.map(|(a, _)| a)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepCell {
    pub alpha: f64,
    /// On the 8-bit scale.
    pub sigma: f64,
    pub psnr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub alphas: Vec<f64>,
    /// Test levels on the 8-bit scale.
    pub sigmas: Vec<f64>,
    /// Sigma-major: all α for `sigmas[0]`, then `sigmas[1]`, …
    pub cells: Vec<SweepCell>,
    pub argmax: Vec<f64>,
    pub ideal: Vec<f64>,
    /// Largest |argmax − ideal| over the test levels.
    pub max_deviation: f64,
}

impl SweepResult {
    /// Assemble from sigma-major PSNR values.
    pub fn from_grid(
        alphas: Vec<f64>,
        sigmas: Vec<f64>,
        psnrs: Vec<f64>,
        sigma_low: f64,
        sigma_high: f64,
    ) -> Result<Self> {
        if psnrs.len() != alphas.len() * sigmas.len() || alphas.is_empty() {
            return Err(Error::Config(format!(
                "sweep grid has {} values for {}×{} cells",
                psnrs.len(),
                alphas.len(),
                sigmas.len()
            )));
        }
        let mut cells = Vec::with_capacity(psnrs.len());
        let mut argmax = Vec::new();
        let mut ideal = Vec::new();
        for (si, &sigma) in sigmas.iter().enumerate() {
            let row = &psnrs[si * alphas.len()..(si + 1) * alphas.len()];
            for (&alpha, &psnr) in alphas.iter().zip(row) {
                cells.push(SweepCell { alpha, sigma, psnr });
            }
            argmax.push(argmax_alpha(&alphas, row).expect("non-empty grid"));
            ideal.push(ideal_alpha(sigma, sigma_low, sigma_high));
        }
        let max_deviation = argmax
            .iter()
            .zip(&ideal)
            .map(|(a, i)| (a - i).abs())
            .fold(0.0, f64::max);
        Ok(SweepResult { alphas, sigmas, cells, argmax, ideal, max_deviation })
    }

    pub fn psnr_at(&self, sigma_index: usize, alpha_index: usize) -> f64 {
        self.cells[sigma_index * self.alphas.len() + alpha_index].psnr
    }

    /// Whether the per-level argmax never decreases as σ grows.
    pub fn argmax_monotone(&self) -> bool {
        self.argmax.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,sigma,psnr\n");
        for c in &self.cells {
            s.push_str(&format!("{:.2},{:.2},{:.6}\n", c.alpha, c.sigma, c.psnr));
        }
        s
    }
}

/// Evaluate `eval(α, σ)` on every grid cell. Cells run on up to
/// [`crate::worker_threads`] threads; results are assembled in grid order.
pub fn alpha_sweep<F>(
    alphas: &[f64],
    sigmas: &[NoiseLevel],
    sigma_low: NoiseLevel,
    sigma_high: NoiseLevel,
    eval: F,
) -> Result<SweepResult>
where
    F: Fn(f64, NoiseLevel) -> Result<f64> + Sync,
{
    let cells: Vec<(f64, NoiseLevel)> = sigmas
        .iter()
        .flat_map(|&s| alphas.iter().map(move |&a| (a, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(crate::worker_threads())
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let psnrs: Vec<f64> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(a, s)| eval(a, s))
            .collect::<Result<Vec<f64>>>()
    })?;
    SweepResult::from_grid(
        alphas.to_vec(),
        sigmas.iter().map(|s| s.as_8bit()).collect(),
        psnrs,
        sigma_low.as_8bit(),
        sigma_high.as_8bit(),
    )
}
