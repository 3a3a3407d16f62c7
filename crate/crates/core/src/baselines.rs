//! Comparison frameworks: AdaFM-style linear filter transitions and
//! DNI-style whole-network interpolation.

use crate::data::SyntheticDataset;
use crate::error::{Error, Result};
use crate::ftn::AlphaPolicy;
use crate::model::{FilterBank, Network};
use crate::ops;
use crate::store::ParamStore;
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};
use crate::train::{self, TrainConfig, TrainOutcome};

/// Per-output-channel scale and shift applied to a filter bank, plus a
/// second-level bias.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaFmLayer<T> {
    /// (1, C_out, 1, 1), initialized to 1.
    pub scale: Tensor<T>,
    /// (1, C_out, 1, 1), initialized to 0.
    pub shift: Tensor<T>,
    /// (1, C_out, 1, 1), initialized to the base bias.
    pub second_bias: Tensor<T>,
}

impl<T: Scalar> AdaFmLayer<T> {
    pub fn new(base: &FilterBank<T>) -> Self {
        let c = base.c_out();
        AdaFmLayer {
            scale: Tensor::full([1, c, 1, 1], T::one()),
            shift: Tensor::zeros([1, c, 1, 1]),
            second_bias: base.bias.clone(),
        }
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        vec![
            ("scale".into(), &self.scale),
            ("shift".into(), &self.shift),
            ("bias2".into(), &self.second_bias),
        ]
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        vec![
            ("scale".into(), &mut self.scale),
            ("shift".into(), &mut self.shift),
            ("bias2".into(), &mut self.second_bias),
        ]
    }

    /// Record `scale ⊙ f + shift` for filters `weights` on the tape; returns
    /// the transformed weights and the second-level bias.
    pub fn record(
        &self,
        tape: &mut Tape<T>,
        weights: Var,
        bind: &mut dyn FnMut(&mut Tape<T>, &str, &Tensor<T>) -> Var,
    ) -> Result<(Var, Var)> {
        let s = bind(tape, "scale", &self.scale);
        let h = bind(tape, "shift", &self.shift);
        let t = tape.swap_nc(weights)?;
        let t = tape.channel_affine(t, s, h)?;
        let moved = tape.swap_nc(t)?;
        let b2 = bind(tape, "bias2", &self.second_bias);
        Ok((moved, b2))
    }

    /// `scale ⊙ f + shift` per output channel; bias untouched.
    pub fn transform(&self, bank: &FilterBank<T>) -> Result<FilterBank<T>> {
        let t = ops::channel_affine(&ops::swap_nc(&bank.weights), &self.scale, &self.shift)?;
        FilterBank::new(ops::swap_nc(&t), bank.bias.clone())
    }
}

/// `blend(f, scale ⊙ f + shift, α)` with the bias blended toward the
/// second-level bias.
pub fn adafm_effective_filters<T: Scalar>(
    layer: &AdaFmLayer<T>,
    bank: &FilterBank<T>,
    alpha: f64,
    policy: AlphaPolicy,
) -> Result<FilterBank<T>> {
    let alpha = policy.apply(alpha)?;
    let moved = layer.transform(bank)?;
    let a = T::of(alpha);
    FilterBank::new(
        ops::blend(&bank.weights, &moved.weights, a)?,
        ops::blend(&bank.bias, &layer.second_bias, a)?,
    )
}

/// Parameter stores of a first-level network and its unconstrained
/// fine-tuned copy.
#[derive(Clone, Debug)]
pub struct DniPair<T> {
    theta_a: ParamStore<T>,
    theta_b: ParamStore<T>,
}

impl<T: Scalar> DniPair<T> {
    pub fn new(theta_a: ParamStore<T>, theta_b: ParamStore<T>) -> Result<Self> {
        theta_a.check_compatible(&theta_b)?;
        Ok(DniPair { theta_a, theta_b })
    }

    pub fn theta_a(&self) -> &ParamStore<T> {
        &self.theta_a
    }

    pub fn theta_b(&self) -> &ParamStore<T> {
        &self.theta_b
    }
}

/// Blend every parameter of the pair with the same `alpha`.
pub fn dni_interpolate<T: Scalar>(pair: &DniPair<T>, alpha: f64) -> Result<ParamStore<T>> {
    let alpha = AlphaPolicy::Strict.apply(alpha)?;
    if alpha == 0.0 {
        return Ok(pair.theta_a.clone());
    }
    if alpha == 1.0 {
        return Ok(pair.theta_b.clone());
    }
    let a = T::of(alpha);
    let mut out = ParamStore::new();
    for ((name, ta), (_, tb)) in pair.theta_a.iter().zip(pair.theta_b.iter()) {
        out.insert(name, ops::blend(ta, tb, a)?)?;
    }
    Ok(out)
}

/// A runnable network holding the interpolated parameters of `pair`.
pub fn dni_network<T: Scalar>(template: &Network<T>, pair: &DniPair<T>, alpha: f64) -> Result<Network<T>> {
    let mut net = template.clone();
    net.load_store(&dni_interpolate(pair, alpha)?)?;
    Ok(net)
}

/// Fine-tune every main parameter of a first-level network on the second
/// level, with the same optimizer settings and step budget as the FTN
/// phase. Returns the fine-tuned network and its training record.
pub fn finetune_unconstrained(
    phase1: &Network<f32>,
    dataset: &mut SyntheticDataset,
    config: &TrainConfig,
) -> Result<(Network<f32>, TrainOutcome)> {
    if phase1.has_providers() {
        return Err(Error::Config(
            "unconstrained fine-tuning expects a network without providers".into(),
        ));
    }
    let mut net = phase1.clone();
    let outcome = train::run_finetune(&mut net, dataset, config)?;
    Ok((net, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ftn::FtnLayer;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bank(rng: &mut ChaCha8Rng, c_out: usize) -> FilterBank<f64> {
        FilterBank::new(
            Tensor::from_fn([c_out, 3, 3, 3], |_| rng.gen_range(-1.0..1.0)),
            Tensor::from_fn([1, c_out, 1, 1], |_| rng.gen_range(-1.0..1.0)),
        )
        .unwrap()
    }

    #[test]
    fn fresh_adafm_is_identity_for_any_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let f = bank(&mut rng, 4);
        let layer = AdaFmLayer::new(&f);
        for alpha in [0.0, 0.3, 1.0] {
            let e = adafm_effective_filters(&layer, &f, alpha, AlphaPolicy::Strict).unwrap();
            assert!(e.weights.max_abs_diff(&f.weights) <= 1e-15);
            assert!(e.bias.max_abs_diff(&f.bias) <= 1e-15);
        }
    }

    #[test]
    fn adafm_scale_and_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let f = bank(&mut rng, 2);
        let mut layer = AdaFmLayer::new(&f);
        layer.scale.data_mut().fill(2.0);
        let e = adafm_effective_filters(&layer, &f, 1.0, AlphaPolicy::Strict).unwrap();
        assert_eq!(e.weights, f.weights.map(|v| 2.0 * v));

        let mut layer = AdaFmLayer::new(&f);
        layer.shift.data_mut()[1] = 0.1;
        let e = adafm_effective_filters(&layer, &f, 0.5, AlphaPolicy::Strict).unwrap();
        for o in 0..2 {
            for i in 0..27 {
                let k = o * 27 + i;
                let want = f.weights.data()[k] + if o == 1 { 0.05 } else { 0.0 };
                assert!((e.weights.data()[k] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn adafm_is_representable_by_a_fully_grouped_ftn() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..20 {
            let c = 8;
            let f = bank(&mut rng, c);
            let mut ada = AdaFmLayer::new(&f);
            ada.scale = Tensor::from_fn([1, c, 1, 1], |_| rng.gen_range(-2.0..2.0));
            ada.shift = Tensor::from_fn([1, c, 1, 1], |_| rng.gen_range(-0.5..0.5));
            let mut ftn = FtnLayer::<f64>::new(c, c, 2).unwrap();
            ftn.stages_mut()[0].weight = ada.scale.clone().reshape([c, 1, 1, 1]).unwrap();
            ftn.stages_mut()[0].bias = ada.shift.clone();
            let want = ada.transform(&f).unwrap();
            let got = ftn.forward(&f).unwrap();
            assert!(got.weights.max_abs_diff(&want.weights) <= 1e-6);
        }
    }

    fn store(values: &[f32]) -> ParamStore<f32> {
        let mut s = ParamStore::new();
        for (i, &v) in values.iter().enumerate() {
            s.insert(format!("p{i}"), Tensor::scalar(v)).unwrap();
        }
        s
    }

    #[test]
    fn dni_endpoints_and_midpoint() {
        let pair = DniPair::new(store(&[1.0, -0.0]), store(&[3.0, 0.0])).unwrap();
        assert!(dni_interpolate(&pair, 0.0).unwrap().bit_eq(pair.theta_a()));
        assert!(dni_interpolate(&pair, 1.0).unwrap().bit_eq(pair.theta_b()));
        let mid = dni_interpolate(&pair, 0.5).unwrap();
        assert_eq!(mid.get("p0").unwrap().item(), 2.0);
        assert!(dni_interpolate(&pair, 1.1).is_err());
    }

    #[test]
    fn dni_rejects_mismatched_stores() {
        assert!(matches!(
            DniPair::new(store(&[1.0]), store(&[1.0, 2.0])),
            Err(Error::IncompatibleStores(_))
        ));
    }
}
