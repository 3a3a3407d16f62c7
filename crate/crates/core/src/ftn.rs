//! Filter transition networks.
//!
//! An [`FtnLayer`] maps a convolution's filter bank to a second-level bank.
//! The bank's weights (C_out, C_in, K_H, K_W) are viewed as C_in samples of a
//! C_out-channel K_H×K_W map, so every stage mixes whole filters within a
//! group:
//!
//! ```text
//! f ──▶ 1×1 grouped conv ──▶ PReLU ──▶ … ──▶ 1×1 grouped conv ──▶ FTN(f)
//! ```
//!
//! At inference the layer's filters are `(1 − α)·f + α·FTN(f)`; with a
//! [`LevelMap`] the blend happens per pixel on the two convolution outputs.

use log::warn;

use crate::error::{Error, Result};
use crate::model::FilterBank;
use crate::tape::{Tape, Var};
use crate::tensor::{Dims, Scalar, Tensor};

/// How blend coefficients outside `[0, 1]` are treated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AlphaPolicy {
    /// Reject with a range error.
    #[default]
    Strict,
    /// Clamp into `[0, 1]` and log a warning.
    Clamp,
    /// Accept any finite value.
    Extrapolate,
}

impl AlphaPolicy {
    pub fn apply(self, alpha: f64) -> Result<f64> {
        if !alpha.is_finite() {
            return Err(Error::Range { what: "alpha", value: alpha });
        }
        if (0.0..=1.0).contains(&alpha) {
            return Ok(alpha);
        }
        match self {
            AlphaPolicy::Strict => Err(Error::Range { what: "alpha", value: alpha }),
            AlphaPolicy::Clamp => {
                let c = alpha.clamp(0.0, 1.0);
                warn!("alpha {alpha} clamped to {c}");
                Ok(c)
            }
            AlphaPolicy::Extrapolate => Ok(alpha),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FtnConfig {
    /// Group count of the 1×1 convolutions.
    pub groups: usize,
    /// Number of 1×1 convolution stages; 2 is the standard module, 3 the
    /// deeper variant.
    pub depth: usize,
}

impl Default for FtnConfig {
    fn default() -> Self {
        FtnConfig { groups: 1, depth: 2 }
    }
}

impl FtnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 {
            return Err(Error::Config("FTN group count must be positive".into()));
        }
        if self.depth < 2 {
            return Err(Error::Config(format!(
                "FTN depth must be at least 2, got {}",
                self.depth
            )));
        }
        Ok(())
    }

    /// Group count used for a layer with `c_out` filters: the largest
    /// divisor of `c_out` that also divides the configured count.
    pub fn groups_for(&self, c_out: usize) -> usize {
        gcd(self.groups, c_out)
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// One grouped 1×1 stage.
#[derive(Clone, Debug, PartialEq)]
pub struct FtnStage<T> {
    /// (C_out, C_out / G, 1, 1)
    pub weight: Tensor<T>,
    /// (1, C_out, 1, 1)
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FtnLayer<T> {
    channels: usize,
    groups: usize,
    stages: Vec<FtnStage<T>>,
    /// One learnable scalar slope between consecutive stages.
    slopes: Vec<Tensor<T>>,
}

impl<T: Scalar> FtnLayer<T> {
    /// Identity-initialized layer acting on banks with `channels` filters.
    pub fn new(channels: usize, groups: usize, depth: usize) -> Result<Self> {
        FtnConfig { groups, depth }.validate()?;
        if channels == 0 || channels % groups != 0 {
            return Err(Error::Config(format!(
                "FTN group count {groups} does not divide C_out = {channels}"
            )));
        }
        let cg = channels / groups;
        let stages = (0..depth)
            .map(|_| FtnStage {
                weight: Tensor::zeros([channels, cg, 1, 1]),
                bias: Tensor::zeros([1, channels, 1, 1]),
            })
            .collect();
        let slopes = (0..depth - 1).map(|_| Tensor::scalar(T::one())).collect();
        let mut layer = FtnLayer {
            channels,
            groups,
            stages,
            slopes,
        };
        layer.identity_init();
        Ok(layer)
    }

    pub fn from_config(channels: usize, config: FtnConfig) -> Result<Self> {
        Self::new(channels, config.groups_for(channels), config.depth)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn depth(&self) -> usize {
        self.stages.len()
    }

    pub fn stages(&self) -> &[FtnStage<T>] {
        &self.stages
    }

    pub fn stages_mut(&mut self) -> &mut [FtnStage<T>] {
        &mut self.stages
    }

    pub fn slopes(&self) -> &[Tensor<T>] {
        &self.slopes
    }

    pub fn slopes_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.slopes
    }

    /// Reset every stage to a per-group identity matrix with zero bias and
    /// every slope to exactly 1, making the layer the identity on any bank.
    pub fn identity_init(&mut self) {
        let cg = self.channels / self.groups;
        for stage in &mut self.stages {
            for (i, w) in stage.weight.data_mut().iter_mut().enumerate() {
                let (o, j) = (i / cg, i % cg);
                *w = if o % cg == j { T::one() } else { T::zero() };
            }
            stage.bias.data_mut().fill(T::zero());
        }
        for s in &mut self.slopes {
            s.data_mut()[0] = T::one();
        }
    }

    pub fn is_identity(&self) -> bool {
        let mut fresh = self.clone();
        fresh.identity_init();
        fresh.stages.iter().zip(&self.stages).all(|(a, b)| {
            a.weight.bit_eq(&b.weight) && a.bias.bit_eq(&b.bias)
        }) && fresh.slopes.iter().zip(&self.slopes).all(|(a, b)| a.bit_eq(b))
    }

    /// Parameters in canonical order with names relative to the layer.
    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::with_capacity(3 * self.stages.len());
        for (s, st) in self.stages.iter().enumerate() {
            out.push((format!("stage{s}.weight"), &st.weight));
            out.push((format!("stage{s}.bias"), &st.bias));
        }
        for (s, t) in self.slopes.iter().enumerate() {
            out.push((format!("slope{s}"), t));
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::with_capacity(3 * self.stages.len());
        for (s, st) in self.stages.iter_mut().enumerate() {
            out.push((format!("stage{s}.weight"), &mut st.weight));
            out.push((format!("stage{s}.bias"), &mut st.bias));
        }
        for (s, t) in self.slopes.iter_mut().enumerate() {
            out.push((format!("slope{s}"), t));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Record the transform of `weights` (a (C_out, C_in, K_H, K_W) value on
    /// the tape). `bind` turns each named parameter into a tape variable.
    pub fn record(
        &self,
        tape: &mut Tape<T>,
        weights: Var,
        bind: &mut dyn FnMut(&mut Tape<T>, &str, &Tensor<T>) -> Var,
    ) -> Result<Var> {
        let d = tape.try_value(weights)?.dims();
        if d.n != self.channels {
            return Err(Error::dims(
                "ftn_forward",
                format!("bank has C_out = {} but layer expects {}", d.n, self.channels),
            ));
        }
        let mut h = tape.swap_nc(weights)?;
        for (s, stage) in self.stages.iter().enumerate() {
            if s > 0 {
                let slope = bind(tape, &format!("slope{}", s - 1), &self.slopes[s - 1]);
                h = tape.prelu(h, slope)?;
            }
            let w = bind(tape, &format!("stage{s}.weight"), &stage.weight);
            let b = bind(tape, &format!("stage{s}.bias"), &stage.bias);
            h = tape.grouped_pointwise_conv(h, w, b, self.groups)?;
        }
        tape.swap_nc(h)
    }

    /// Transformed weights of `bank`; the bias passes through untouched.
    pub fn forward(&self, bank: &FilterBank<T>) -> Result<FilterBank<T>> {
        if bank.c_out() % self.groups != 0 {
            return Err(Error::Config(format!(
                "FTN group count {} does not divide C_out = {}",
                self.groups,
                bank.c_out()
            )));
        }
        let mut tape = Tape::new();
        let w = tape.constant(bank.weights.clone());
        let out = self.record(&mut tape, w, &mut |t, _, v| t.constant(v.clone()))?;
        FilterBank::new(tape.value(out).clone(), bank.bias.clone())
    }
}

/// `FTN(f)` for a bank `f`.
pub fn ftn_forward<T: Scalar>(layer: &FtnLayer<T>, bank: &FilterBank<T>) -> Result<FilterBank<T>> {
    layer.forward(bank)
}

/// `(1 − α)·f + α·FTN(f)` for the weights and `(1 − α)·b + α·b₂` for the
/// bias, where `b₂` is the layer's second-level bias.
pub fn effective_filters<T: Scalar>(
    layer: &FtnLayer<T>,
    bank: &FilterBank<T>,
    second_bias: &Tensor<T>,
    alpha: f64,
    policy: AlphaPolicy,
) -> Result<FilterBank<T>> {
    let alpha = policy.apply(alpha)?;
    if alpha == 0.0 {
        return Ok(bank.clone());
    }
    let moved = layer.forward(bank)?;
    let a = T::of(alpha);
    FilterBank::new(
        crate::ops::blend(&bank.weights, &moved.weights, a)?,
        crate::ops::blend(&bank.bias, second_bias, a)?,
    )
}

/// Per-pixel blend coefficients, stored as a (1, 1, H, W) tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelMap<T> {
    values: Tensor<T>,
}

impl<T: Scalar> LevelMap<T> {
    pub fn new(height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        let values = Tensor::new([1, 1, height, width], values)?;
        if let Some(bad) = values
            .data()
            .iter()
            .find(|v| !(**v >= T::zero() && **v <= T::one()))
        {
            return Err(Error::Range {
                what: "level map entry",
                value: bad.as_f64(),
            });
        }
        Ok(LevelMap { values })
    }

    pub fn constant(height: usize, width: usize, alpha: f64) -> Result<Self> {
        Self::new(height, width, vec![T::of(alpha); height * width])
    }

    /// Left-to-right linear ramp from `left` to `right`.
    pub fn ramp(height: usize, width: usize, left: f64, right: f64) -> Result<Self> {
        let denom = (width.max(2) - 1) as f64;
        let row: Vec<T> = (0..width)
            .map(|x| T::of(left + (right - left) * x as f64 / denom))
            .collect();
        Self::new(height, width, row.repeat(height))
    }

    pub fn height(&self) -> usize {
        self.values.dims().h
    }

    pub fn width(&self) -> usize {
        self.values.dims().w
    }

    pub fn as_tensor(&self) -> &Tensor<T> {
        &self.values
    }

    /// Resample to another spatial size by nearest neighbour; the identity
    /// when the size already matches.
    pub fn resampled(&self, height: usize, width: usize) -> Self {
        if height == self.height() && width == self.width() {
            return self.clone();
        }
        let (h0, w0) = (self.height(), self.width());
        let values = Tensor::from_fn(Dims::new(1, 1, height, width), |i| {
            let (y, x) = (i / width, i % width);
            let sy = (y * h0) / height;
            let sx = (x * w0) / width;
            self.values.data()[sy * w0 + sx]
        });
        LevelMap { values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bank(rng: &mut ChaCha8Rng, c_out: usize, c_in: usize) -> FilterBank<f64> {
        FilterBank::new(
            Tensor::from_fn([c_out, c_in, 3, 3], |_| rng.gen_range(-1.0..1.0)),
            Tensor::from_fn([1, c_out, 1, 1], |_| rng.gen_range(-1.0..1.0)),
        )
        .unwrap()
    }

    #[test]
    fn fresh_layer_is_exact_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for &(g, depth) in &[(1, 2), (4, 2), (16, 2), (1, 3)] {
            let layer = FtnLayer::<f64>::new(16, g, depth).unwrap();
            assert!(layer.is_identity());
            for _ in 0..100 {
                let f = random_bank(&mut rng, 16, 3);
                let out = layer.forward(&f).unwrap();
                assert!(out.weights.bit_eq(&f.weights));
                assert!(out.bias.bit_eq(&f.bias));
            }
        }
    }

    #[test]
    fn hand_composed_two_stage_map() {
        // Stage 1 doubles, slope 1, stage 2 identity: [1, -1] -> [2, -2].
        let mut layer = FtnLayer::<f64>::new(2, 1, 2).unwrap();
        layer.stages_mut()[0].weight = Tensor::new([2, 2, 1, 1], vec![2.0, 0.0, 0.0, 2.0]).unwrap();
        let f = FilterBank::new(
            Tensor::new([2, 1, 1, 1], vec![1.0, -1.0]).unwrap(),
            Tensor::zeros([1, 2, 1, 1]),
        )
        .unwrap();
        assert_eq!(layer.forward(&f).unwrap().weights.data(), &[2.0, -2.0]);
        // With slope 0.5 the negative entry is halved after stage 1.
        layer.slopes_mut()[0] = Tensor::scalar(0.5);
        assert_eq!(layer.forward(&f).unwrap().weights.data(), &[2.0, -1.0]);
    }

    #[test]
    fn groups_confine_changes() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut layer = FtnLayer::<f64>::new(4, 2, 2).unwrap();
        for st in layer.stages_mut() {
            st.weight = Tensor::from_fn([4, 2, 1, 1], |_| rng.gen_range(-1.0..1.0));
        }
        let f = random_bank(&mut rng, 4, 2);
        let base = layer.forward(&f).unwrap();
        let mut g = f.clone();
        // Perturb filter 0 (group 0).
        for v in g.weights.data_mut()[..18].iter_mut() {
            *v += 0.3;
        }
        let moved = layer.forward(&g).unwrap();
        let per_filter = 2 * 9;
        assert_eq!(
            &base.weights.data()[2 * per_filter..],
            &moved.weights.data()[2 * per_filter..]
        );
        assert_ne!(&base.weights.data()[..per_filter], &moved.weights.data()[..per_filter]);
    }

    #[test]
    fn effective_filters_endpoints_and_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut layer = FtnLayer::<f64>::new(4, 1, 2).unwrap();
        layer.stages_mut()[0].weight = Tensor::from_fn([4, 4, 1, 1], |_| rng.gen_range(-1.0..1.0));
        let f = random_bank(&mut rng, 4, 2);
        let b2 = Tensor::from_fn([1, 4, 1, 1], |_| rng.gen_range(-1.0..1.0));
        let p = AlphaPolicy::Strict;
        let e0 = effective_filters(&layer, &f, &b2, 0.0, p).unwrap();
        assert!(e0.weights.bit_eq(&f.weights) && e0.bias.bit_eq(&f.bias));
        let e1 = effective_filters(&layer, &f, &b2, 1.0, p).unwrap();
        assert!(e1.weights.bit_eq(&layer.forward(&f).unwrap().weights));
        assert!(e1.bias.bit_eq(&b2));
        let mid = effective_filters(&layer, &f, &b2, 0.5, p).unwrap();
        for i in 0..mid.weights.numel() {
            let mean = 0.5 * (e0.weights.data()[i] + e1.weights.data()[i]);
            assert!((mid.weights.data()[i] - mean).abs() <= 4.0 * f64::EPSILON * mean.abs().max(1.0));
        }
    }

    #[test]
    fn alpha_policies() {
        assert!(matches!(AlphaPolicy::Strict.apply(1.2), Err(Error::Range { .. })));
        assert_eq!(AlphaPolicy::Clamp.apply(1.2).unwrap(), 1.0);
        assert_eq!(AlphaPolicy::Clamp.apply(-0.1).unwrap(), 0.0);
        assert_eq!(AlphaPolicy::Extrapolate.apply(1.2).unwrap(), 1.2);
        assert!(AlphaPolicy::Extrapolate.apply(f64::NAN).is_err());
    }

    #[test]
    fn indivisible_groups_rejected() {
        assert!(matches!(FtnLayer::<f32>::new(6, 4, 2), Err(Error::Config(_))));
        assert!(matches!(FtnLayer::<f32>::new(4, 1, 1), Err(Error::Config(_))));
        assert_eq!(FtnConfig { groups: 16, depth: 2 }.groups_for(1), 1);
        assert_eq!(FtnConfig { groups: 16, depth: 2 }.groups_for(8), 8);
    }

    #[test]
    fn level_map_validation_and_ramp() {
        assert!(LevelMap::<f32>::new(1, 2, vec![0.0, 1.5]).is_err());
        let r = LevelMap::<f64>::ramp(2, 5, 0.0, 1.0).unwrap();
        assert_eq!(r.as_tensor().data()[..5], [0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(r.resampled(2, 5), r);
    }
}
