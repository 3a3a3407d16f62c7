//! Residual CNN denoiser whose convolutions draw their filters from
//! pluggable providers.
//!
//! Topology: head conv → `num_blocks` × (conv → PReLU → conv, additive skip)
//! → tail conv, plus a global skip from the input image to the output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::baselines::AdaFmLayer;
use crate::error::{Error, Result};
use crate::ftn::{AlphaPolicy, FtnConfig, FtnLayer, LevelMap};
use crate::store::ParamStore;
use crate::tape::{MacCounter, Tape, Var};
use crate::tensor::{Dims, Scalar, Tensor};

/// Fixed negative slope of the main network's activations.
pub const MAIN_PRELU_SLOPE: f64 = 0.2;

/// Init std multiplier for the convolutions closing a residual branch and
/// for the output convolution.
pub const RESIDUAL_INIT_SCALE: f64 = 0.1;

/// Weights (C_out, C_in, K_H, K_W) and bias (1, C_out, 1, 1) of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> FilterBank<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let d = weights.dims();
        if d.numel() == 0 {
            return Err(Error::dims("FilterBank", format!("empty weights {d}")));
        }
        if d.h % 2 == 0 || d.w % 2 == 0 {
            return Err(Error::dims("FilterBank", format!("kernel {}x{} is not odd", d.h, d.w)));
        }
        if bias.dims() != Dims::new(1, d.n, 1, 1) {
            return Err(Error::dims(
                "FilterBank",
                format!("bias {} does not match C_out = {}", bias.dims(), d.n),
            ));
        }
        Ok(FilterBank { weights, bias })
    }

    pub fn c_out(&self) -> usize {
        self.weights.dims().n
    }

    pub fn c_in(&self) -> usize {
        self.weights.dims().c
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weights.dims().h, self.weights.dims().w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub channels: usize,
    pub num_blocks: usize,
    pub kernel_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            channels: 16,
            num_blocks: 4,
            kernel_size: 3,
            in_channels: 1,
            out_channels: 1,
        }
    }
}

/// Shape of one convolution in the topology.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvShape {
    pub name: String,
    pub c_out: usize,
    pub c_in: usize,
    pub kernel: usize,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if self.kernel_size == 0 || self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!(
                "kernel_size must be odd, got {}",
                self.kernel_size
            )));
        }
        if self.in_channels != self.out_channels {
            return Err(Error::Config(
                "global skip requires in_channels == out_channels".into(),
            ));
        }
        Ok(())
    }

    pub fn conv_shapes(&self) -> Vec<ConvShape> {
        let k = self.kernel_size;
        let shape = |name: String, c_out, c_in| ConvShape { name, c_out, c_in, kernel: k };
        let mut out = vec![shape("head".into(), self.channels, self.in_channels)];
        for b in 0..self.num_blocks {
            out.push(shape(format!("block{b}.conv1"), self.channels, self.channels));
            out.push(shape(format!("block{b}.conv2"), self.channels, self.channels));
        }
        out.push(shape("tail".into(), self.out_channels, self.channels));
        out
    }

    /// Weights plus biases of the main network.
    pub fn parameter_count(&self) -> usize {
        self.conv_shapes()
            .iter()
            .map(|s| s.c_out * s.c_in * s.kernel * s.kernel + s.c_out)
            .sum()
    }
}

/// Which tuning module is attached to the network's convolutions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProviderKind {
    Plain,
    Ftn(FtnConfig),
    AdaFm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Leave the final convolution plain. Always applied for AdaFM.
    pub exclude_last: bool,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Plain,
            exclude_last: false,
        }
    }
}

impl ProviderConfig {
    pub fn ftn(config: FtnConfig) -> Self {
        ProviderConfig {
            kind: ProviderKind::Ftn(config),
            exclude_last: false,
        }
    }

    pub fn adafm() -> Self {
        ProviderConfig {
            kind: ProviderKind::AdaFm,
            exclude_last: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerProvider<T> {
    Plain,
    Ftn {
        layer: FtnLayer<T>,
        /// Second-level bias, blended linearly with the base bias.
        second_bias: Tensor<T>,
    },
    AdaFm(AdaFmLayer<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub name: String,
    pub base: FilterBank<T>,
    pub provider: LayerProvider<T>,
}

/// How a forward pass chooses between the two levels.
#[derive(Clone, Copy, Debug)]
pub enum Level<'a, T> {
    Global(f64),
    Map(&'a LevelMap<T>),
}

/// Which parameters a forward pass records as trainable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trainable {
    Nothing,
    /// Base filter banks only.
    Main,
    /// Provider parameters only.
    Tuning,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    Main,
    Tuning,
}

/// Parameter groups for [`Network::collect_parameters`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Main,
    Tuning,
}

/// Output of [`Network::record`]: the output variable and the tape variable
/// bound to every parameter that took part in the pass.
#[derive(Debug)]
pub struct Recorded {
    pub output: Var,
    pub params: Vec<(String, Var)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    providers: ProviderConfig,
    layers: Vec<ConvLayer<T>>,
    alpha_policy: AlphaPolicy,
}

/// Build a network with fan-in scaled normal weights and zero biases from a
/// seeded generator; see [`RESIDUAL_INIT_SCALE`].
pub fn build_network<T: Scalar>(spec: NetworkSpec, seed: u64) -> Result<Network<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gain = 2.0 / (1.0 + MAIN_PRELU_SLOPE * MAIN_PRELU_SLOPE);
    let mut layers = Vec::new();
    for shape in spec.conv_shapes() {
        let fan_in = (shape.c_in * shape.kernel * shape.kernel) as f64;
        // Layers that feed a skip connection start small so the untrained
        // network stays close to the identity map.
        let damp = if shape.name == "tail" || shape.name.ends_with("conv2") {
            RESIDUAL_INIT_SCALE
        } else {
            1.0
        };
        let normal = Normal::new(0.0, damp * (gain / fan_in).sqrt()).expect("positive std");
        let weights = Tensor::from_fn([shape.c_out, shape.c_in, shape.kernel, shape.kernel], |_| {
            T::of(normal.sample(&mut rng))
        });
        let bias = Tensor::zeros([1, shape.c_out, 1, 1]);
        layers.push(ConvLayer {
            name: shape.name,
            base: FilterBank::new(weights, bias)?,
            provider: LayerProvider::Plain,
        });
    }
    Ok(Network {
        spec,
        providers: ProviderConfig::default(),
        layers,
        alpha_policy: AlphaPolicy::Strict,
    })
}

impl<T: Scalar> Network<T> {
    pub fn spec(&self) -> NetworkSpec {
        self.spec
    }

    pub fn provider_config(&self) -> ProviderConfig {
        self.providers
    }

    pub fn layers(&self) -> &[ConvLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer<T>] {
        &mut self.layers
    }

    pub fn alpha_policy(&self) -> AlphaPolicy {
        self.alpha_policy
    }

    pub fn set_alpha_policy(&mut self, policy: AlphaPolicy) {
        self.alpha_policy = policy;
    }

    pub fn has_providers(&self) -> bool {
        self.layers
            .iter()
            .any(|l| !matches!(l.provider, LayerProvider::Plain))
    }

    /// Attach freshly identity-initialized providers to every convolution
    /// (except the last when excluded). Replaces existing providers.
    pub fn attach_providers(&mut self, config: ProviderConfig) -> Result<()> {
        let last = self.layers.len() - 1;
        let exclude_last = config.exclude_last || config.kind == ProviderKind::AdaFm;
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let c_out = layer.base.c_out();
            layer.provider = if exclude_last && i == last {
                LayerProvider::Plain
            } else {
                match config.kind {
                    ProviderKind::Plain => LayerProvider::Plain,
                    ProviderKind::Ftn(ftn) => {
                        ftn.validate()?;
                        LayerProvider::Ftn {
                            layer: FtnLayer::from_config(c_out, ftn)?,
                            second_bias: layer.base.bias.clone(),
                        }
                    }
                    ProviderKind::AdaFm => LayerProvider::AdaFm(AdaFmLayer::new(&layer.base)),
                }
            };
        }
        self.providers = ProviderConfig {
            kind: config.kind,
            exclude_last,
        };
        Ok(())
    }

    pub fn detach_providers(&mut self) {
        for layer in &mut self.layers {
            layer.provider = LayerProvider::Plain;
        }
        self.providers = ProviderConfig::default();
    }

    /// Every parameter with its role, in canonical order.
    pub fn named_params(&self) -> Vec<(String, ParamRole, &Tensor<T>)> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.push((format!("{}.weight", layer.name), ParamRole::Main, &layer.base.weights));
            out.push((format!("{}.bias", layer.name), ParamRole::Main, &layer.base.bias));
        }
        for layer in &self.layers {
            match &layer.provider {
                LayerProvider::Plain => {}
                LayerProvider::Ftn { layer: ftn, second_bias } => {
                    for (n, t) in ftn.named_params() {
                        out.push((format!("{}.ftn.{n}", layer.name), ParamRole::Tuning, t));
                    }
                    out.push((format!("{}.ftn.bias2", layer.name), ParamRole::Tuning, second_bias));
                }
                LayerProvider::AdaFm(a) => {
                    for (n, t) in a.named_params() {
                        out.push((format!("{}.adafm.{n}", layer.name), ParamRole::Tuning, t));
                    }
                }
            }
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, ParamRole, &mut Tensor<T>)> {
        let mut out = Vec::new();
        let mut tuning = Vec::new();
        for layer in &mut self.layers {
            let name = layer.name.clone();
            out.push((format!("{name}.weight"), ParamRole::Main, &mut layer.base.weights));
            out.push((format!("{name}.bias"), ParamRole::Main, &mut layer.base.bias));
            match &mut layer.provider {
                LayerProvider::Plain => {}
                LayerProvider::Ftn { layer: ftn, second_bias } => {
                    for (n, t) in ftn.named_params_mut() {
                        tuning.push((format!("{name}.ftn.{n}"), ParamRole::Tuning, t));
                    }
                    tuning.push((format!("{name}.ftn.bias2"), ParamRole::Tuning, second_bias));
                }
                LayerProvider::AdaFm(a) => {
                    for (n, t) in a.named_params_mut() {
                        tuning.push((format!("{name}.adafm.{n}"), ParamRole::Tuning, t));
                    }
                }
            }
        }
        out.extend(tuning);
        out
    }

    /// Names of the parameters optimized in `phase`.
    pub fn collect_parameters(&self, phase: Phase) -> Result<Vec<String>> {
        let want = match phase {
            Phase::Main => ParamRole::Main,
            Phase::Tuning => ParamRole::Tuning,
        };
        let names: Vec<String> = self
            .named_params()
            .into_iter()
            .filter(|(_, r, _)| *r == want)
            .map(|(n, _, _)| n)
            .collect();
        if phase == Phase::Tuning && names.is_empty() {
            return Err(Error::Config(
                "tuning phase requested but no providers are attached".into(),
            ));
        }
        Ok(names)
    }

    pub fn param_count(&self, role: ParamRole) -> usize {
        self.named_params()
            .iter()
            .filter(|(_, r, _)| *r == role)
            .map(|(_, _, t)| t.numel())
            .sum()
    }

    /// Snapshot of every parameter.
    pub fn store(&self) -> ParamStore<T> {
        let mut s = ParamStore::new();
        for (n, _, t) in self.named_params() {
            s.insert(n, t.clone()).expect("parameter names are unique");
        }
        s
    }

    /// Snapshot of the base filter banks only.
    pub fn main_store(&self) -> ParamStore<T> {
        let mut s = ParamStore::new();
        for (n, r, t) in self.named_params() {
            if r == ParamRole::Main {
                s.insert(n, t.clone()).expect("parameter names are unique");
            }
        }
        s
    }

    /// Overwrite parameters from `store`, which must name exactly this
    /// network's parameters with matching dims.
    pub fn load_store(&mut self, store: &ParamStore<T>) -> Result<()> {
        let mut params = self.named_params_mut();
        if params.len() != store.len() {
            return Err(Error::IncompatibleStores(format!(
                "network has {} parameters, store has {}",
                params.len(),
                store.len()
            )));
        }
        for (name, _, t) in params.iter_mut() {
            let src = store
                .get(name)
                .ok_or_else(|| Error::IncompatibleStores(format!("store lacks {name}")))?;
            if src.dims() != t.dims() {
                return Err(Error::IncompatibleStores(format!(
                    "{name}: dims {} vs {}",
                    src.dims(),
                    t.dims()
                )));
            }
            **t = src.clone();
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let store = self.store().cast::<U>();
        let mut net = Network {
            spec: self.spec,
            providers: ProviderConfig::default(),
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer {
                    name: l.name.clone(),
                    base: FilterBank {
                        weights: l.base.weights.cast(),
                        bias: l.base.bias.cast(),
                    },
                    provider: LayerProvider::Plain,
                })
                .collect(),
            alpha_policy: self.alpha_policy,
        };
        net.attach_providers(self.providers).expect("config was valid for the source");
        net.load_store(&store).expect("same structure");
        net
    }

    /// Record a forward pass of `input` on `tape`.
    pub fn record(
        &self,
        tape: &mut Tape<T>,
        input: Var,
        level: Level<'_, T>,
        trainable: Trainable,
    ) -> Result<Recorded> {
        let x = tape.try_value(input)?.dims();
        if x.c != self.spec.in_channels {
            return Err(Error::dims(
                "forward",
                format!("image axis C = {} but network expects {}", x.c, self.spec.in_channels),
            ));
        }
        let level = match level {
            Level::Global(a) => LevelResolved::Global(self.alpha_policy.apply(a)?),
            Level::Map(m) => {
                if m.height() != x.h || m.width() != x.w {
                    return Err(Error::dims(
                        "forward",
                        format!(
                            "level map {}x{} does not match image {}x{}",
                            m.height(),
                            m.width(),
                            x.h,
                            x.w
                        ),
                    ));
                }
                LevelResolved::Map(m)
            }
        };

        let mut params = Vec::new();
        let mut bind = |tape: &mut Tape<T>, name: String, role: ParamRole, t: &Tensor<T>| {
            let grad = matches!(
                (trainable, role),
                (Trainable::Main, ParamRole::Main) | (Trainable::Tuning, ParamRole::Tuning)
            );
            let v = tape.leaf(t.clone(), grad);
            params.push((name, v));
            v
        };
        let slope = tape.constant(Tensor::scalar(T::of(MAIN_PRELU_SLOPE)));
        let pad = self.spec.kernel_size / 2;

        let mut conv = |tape: &mut Tape<T>, i: usize, h: Var| -> Result<Var> {
            let layer = &self.layers[i];
            let name = &layer.name;
            let w = bind(tape, format!("{name}.weight"), ParamRole::Main, &layer.base.weights);
            let b = bind(tape, format!("{name}.bias"), ParamRole::Main, &layer.base.bias);
            // Second-level filters and bias, when a provider is active.
            let second = |tape: &mut Tape<T>,
                          bind: &mut dyn FnMut(&mut Tape<T>, String, ParamRole, &Tensor<T>) -> Var|
             -> Result<Option<(Var, Var)>> {
                match &layer.provider {
                    LayerProvider::Plain => Ok(None),
                    LayerProvider::Ftn { layer: ftn, second_bias } => {
                        let moved = ftn.record(tape, w, &mut |t, n, v| {
                            bind(t, format!("{name}.ftn.{n}"), ParamRole::Tuning, v)
                        })?;
                        let b2 = bind(tape, format!("{name}.ftn.bias2"), ParamRole::Tuning, second_bias);
                        Ok(Some((moved, b2)))
                    }
                    LayerProvider::AdaFm(a) => {
                        let (moved, b2) = a.record(tape, w, &mut |t, n, v| {
                            bind(t, format!("{name}.adafm.{n}"), ParamRole::Tuning, v)
                        })?;
                        Ok(Some((moved, b2)))
                    }
                }
            };
            match level {
                LevelResolved::Global(alpha) if alpha == 0.0 => tape.conv2d(h, w, b, pad),
                LevelResolved::Global(alpha) => match second(tape, &mut bind)? {
                    None => tape.conv2d(h, w, b, pad),
                    Some((w2, b2)) => {
                        let a = T::of(alpha);
                        let we = tape.blend(w, w2, a)?;
                        let be = tape.blend(b, b2, a)?;
                        tape.conv2d(h, we, be, pad)
                    }
                },
                LevelResolved::Map(map) => match second(tape, &mut bind)? {
                    None => tape.conv2d(h, w, b, pad),
                    Some((w2, b2)) => {
                        let y0 = tape.conv2d(h, w, b, pad)?;
                        let y1 = tape.conv2d(h, w2, b2, pad)?;
                        let d = tape.value(y0).dims();
                        let m = map.resampled(d.h, d.w);
                        tape.blend_map(y0, y1, m.as_tensor())
                    }
                },
            }
        };

        let mut h = conv(tape, 0, input)?;
        for blk in 0..self.spec.num_blocks {
            let r = conv(tape, 1 + 2 * blk, h)?;
            let r = tape.prelu(r, slope)?;
            let r = conv(tape, 2 + 2 * blk, r)?;
            h = tape.add(h, r)?;
        }
        let y = conv(tape, self.layers.len() - 1, h)?;
        let output = tape.add(input, y)?;
        drop(conv);
        Ok(Recorded { output, params })
    }

    /// Inference without gradient tracking.
    pub fn forward(&self, input: &Tensor<T>, level: Level<'_, T>) -> Result<Tensor<T>> {
        Ok(self.forward_counted(input, level)?.0)
    }

    /// Inference that also returns the multiply-accumulate counts.
    pub fn forward_counted(
        &self,
        input: &Tensor<T>,
        level: Level<'_, T>,
    ) -> Result<(Tensor<T>, MacCounter)> {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let rec = self.record(&mut tape, x, level, Trainable::Nothing)?;
        let macs = tape.macs();
        Ok((tape.value(rec.output).clone(), macs))
    }

    /// Effective filter bank of layer `index` at global level `alpha`.
    pub fn effective_bank(&self, index: usize, alpha: f64) -> Result<FilterBank<T>> {
        let layer = &self.layers[index];
        match &layer.provider {
            LayerProvider::Plain => Ok(layer.base.clone()),
            LayerProvider::Ftn { layer: ftn, second_bias } => {
                crate::ftn::effective_filters(ftn, &layer.base, second_bias, alpha, self.alpha_policy)
            }
            LayerProvider::AdaFm(a) => {
                crate::baselines::adafm_effective_filters(a, &layer.base, alpha, self.alpha_policy)
            }
        }
    }
}

#[derive(Clone, Copy)]
enum LevelResolved<'a, T> {
    Global(f64),
    Map(&'a LevelMap<T>),
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn image(seed: u64, dims: [usize; 4]) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(dims, |_| rng.gen())
    }

    #[test]
    fn build_is_deterministic() {
        let a: Network<f32> = build_network(NetworkSpec::default(), 5).unwrap();
        let b: Network<f32> = build_network(NetworkSpec::default(), 5).unwrap();
        assert!(a.store().bit_eq(&b.store()));
        let c: Network<f32> = build_network(NetworkSpec::default(), 6).unwrap();
        assert!(!a.store().bit_eq(&c.store()));
    }

    #[test]
    fn default_parameter_count_matches_topology() {
        // head 16·1·9+16, 8 inner convs of 16·16·9+16, tail 1·16·9+1.
        let expected = (144 + 16) + 8 * (2304 + 16) + (144 + 1);
        let spec = NetworkSpec::default();
        assert_eq!(spec.parameter_count(), expected);
        let net: Network<f32> = build_network(spec, 0).unwrap();
        assert_eq!(net.param_count(ParamRole::Main), expected);
        assert_eq!(net.store().numel(), expected);
    }

    #[test]
    fn zero_blocks_is_still_a_valid_map() {
        let spec = NetworkSpec { num_blocks: 0, ..NetworkSpec::default() };
        let net: Network<f32> = build_network(spec, 1).unwrap();
        assert_eq!(net.layers().len(), 2);
        let x = image(2, [1, 1, 8, 8]);
        assert_eq!(net.forward(&x, Level::Global(0.0)).unwrap().dims(), x.dims());
    }

    #[test]
    fn zero_filters_give_identity_through_global_skip() {
        let mut net: Network<f32> = build_network(NetworkSpec::default(), 3).unwrap();
        for l in net.layers_mut() {
            l.base.weights.data_mut().fill(0.0);
        }
        let x = image(4, [2, 1, 8, 8]);
        assert_eq!(net.forward(&x, Level::Global(0.0)).unwrap(), x);
    }

    #[test]
    fn providers_at_alpha_zero_are_bit_exact() {
        let plain: Network<f32> = build_network(NetworkSpec::default(), 7).unwrap();
        let x = image(8, [2, 1, 12, 12]);
        let want = plain.forward(&x, Level::Global(0.0)).unwrap();
        for cfg in [
            ProviderConfig::ftn(FtnConfig { groups: 4, depth: 3 }),
            ProviderConfig::adafm(),
        ] {
            let mut net = plain.clone();
            net.attach_providers(cfg).unwrap();
            // Perturb the provider so it is not an identity.
            for (_, role, t) in net.named_params_mut() {
                if role == ParamRole::Tuning {
                    for v in t.data_mut() {
                        *v += 0.05;
                    }
                }
            }
            assert!(net.forward(&x, Level::Global(0.0)).unwrap().bit_eq(&want));
            let zero = LevelMap::constant(12, 12, 0.0).unwrap();
            assert!(net.forward(&x, Level::Map(&zero)).unwrap().bit_eq(&want));
        }
    }

    #[test]
    fn identity_providers_at_alpha_one_match_alpha_zero() {
        let mut net: Network<f32> = build_network(NetworkSpec::default(), 9).unwrap();
        net.attach_providers(ProviderConfig::ftn(FtnConfig::default())).unwrap();
        let x = image(10, [2, 1, 10, 10]);
        let a0 = net.forward(&x, Level::Global(0.0)).unwrap();
        let a1 = net.forward(&x, Level::Global(1.0)).unwrap();
        assert!(a0.max_abs_diff(&a1) <= 1e-6);
    }

    #[test]
    fn parameter_phases_are_disjoint_and_counted() {
        let mut net: Network<f32> = build_network(NetworkSpec::default(), 0).unwrap();
        assert!(net.collect_parameters(Phase::Tuning).is_err());
        net.attach_providers(ProviderConfig::ftn(FtnConfig::default())).unwrap();
        let main = net.collect_parameters(Phase::Main).unwrap();
        let tuning = net.collect_parameters(Phase::Tuning).unwrap();
        assert_eq!(main.len(), 2 * net.layers().len());
        assert!(main.iter().all(|n| !tuning.contains(n)));
        let groups: std::collections::BTreeSet<&str> = tuning
            .iter()
            .map(|n| n.split(".ftn.").next().unwrap())
            .collect();
        assert_eq!(groups.len(), net.layers().len());
    }

    #[test]
    fn level_map_size_is_checked() {
        let mut net: Network<f32> = build_network(NetworkSpec::default(), 0).unwrap();
        net.attach_providers(ProviderConfig::ftn(FtnConfig::default())).unwrap();
        let m = LevelMap::constant(4, 5, 0.5).unwrap();
        let x = image(1, [1, 1, 4, 4]);
        assert!(matches!(
            net.forward(&x, Level::Map(&m)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn strict_alpha_rejects_extrapolation() {
        let mut net: Network<f32> = build_network(NetworkSpec::default(), 0).unwrap();
        let x = image(1, [1, 1, 4, 4]);
        assert!(net.forward(&x, Level::Global(1.5)).is_err());
        net.set_alpha_policy(AlphaPolicy::Extrapolate);
        assert!(net.forward(&x, Level::Global(1.5)).is_ok());
    }

    #[test]
    fn provider_banks_keep_base_shape() {
        let mut net: Network<f32> = build_network(NetworkSpec::default(), 0).unwrap();
        for cfg in [
            ProviderConfig::ftn(FtnConfig { groups: 16, depth: 2 }),
            ProviderConfig::adafm(),
        ] {
            net.attach_providers(cfg).unwrap();
            for i in 0..net.layers().len() {
                let e = net.effective_bank(i, 0.7).unwrap();
                assert_eq!(e.weights.dims(), net.layers()[i].base.weights.dims());
                assert_eq!(e.bias.dims(), net.layers()[i].base.bias.dims());
            }
        }
    }
}
