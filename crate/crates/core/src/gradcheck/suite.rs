//! Randomized gradient checks of every tape operation and of a complete
//! FTN-wrapped convolution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{grad_check, grad_check_excluding, GradCheckReport};
use crate::error::{Error, Result};
use crate::ftn::FtnLayer;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Worst agreement for one operation over all its instances and operands.
#[derive(Clone, Debug, PartialEq)]
pub struct OpCheck {
    pub name: &'static str,
    pub max_rel_error: f64,
    /// One per (instance, differentiated operand).
    pub checks: usize,
    pub coordinates: usize,
    /// Coordinates left out because a kink lies inside the stencil.
    pub skipped: usize,
}

impl OpCheck {
    fn new(name: &'static str) -> Self {
        OpCheck { name, max_rel_error: 0.0, checks: 0, coordinates: 0, skipped: 0 }
    }

    fn add(&mut self, r: Result<GradCheckReport>) -> Result<()> {
        let r = r?;
        self.max_rel_error = self.max_rel_error.max(r.max_rel_error);
        self.checks += 1;
        self.coordinates += r.checked;
        self.skipped += r.skipped;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub epsilon: f64,
    pub ops: Vec<OpCheck>,
}

impl SuiteReport {
    pub fn max_rel_error(&self) -> f64 {
        self.ops.iter().map(|o| o.max_rel_error).fold(0.0, f64::max)
    }

    /// Every op within `tolerance`, and kinks excluded from at most 2% of
    /// any op's coordinates.
    pub fn passed(&self, tolerance: f64) -> bool {
        self.ops
            .iter()
            .all(|o| o.max_rel_error <= tolerance && o.skipped * 50 <= o.coordinates + o.skipped)
    }

    /// `op,checks,coordinates,skipped,max_rel_error`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("op,checks,coordinates,skipped,max_rel_error\n");
        for o in &self.ops {
            s.push_str(&format!(
                "{},{},{},{},{:.6e}\n",
                o.name, o.checks, o.coordinates, o.skipped, o.max_rel_error
            ));
        }
        s
    }
}

fn normal(rng: &mut ChaCha8Rng, dims: [usize; 4], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| scale * rng.sample::<f64, _>(StandardNormal))
}

fn uniform(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| rng.gen::<f64>())
}

fn random_ftn(rng: &mut ChaCha8Rng, channels: usize, groups: usize, depth: usize, scale: f64) -> FtnLayer<f64> {
    let mut layer = FtnLayer::<f64>::new(channels, groups, depth).expect("valid FTN shape");
    for s in layer.stages_mut() {
        for v in s.weight.data_mut().iter_mut().chain(s.bias.data_mut()) {
            *v += scale * rng.sample::<f64, _>(StandardNormal);
        }
    }
    for s in layer.slopes_mut() {
        *s = Tensor::scalar(rng.gen_range(0.05..0.9));
    }
    layer
}

/// Project a tensor output to a scalar with fixed random weights.
fn project(t: &mut Tape<f64>, v: Var, seed: u64) -> Result<Var> {
    let d = t.try_value(v)?.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Tensor::from_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
    t.dot(v, w)
}

/// Coordinates whose forward and backward one-sided differences disagree:
/// a kink lies inside the stencil. Only valid for objectives that are
/// piecewise linear in each coordinate.
fn kinked<F>(f: &F, point: &Tensor<f64>, eps: f64) -> Result<Vec<bool>>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let eval = |p: Tensor<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.leaf(p, false);
        let y = f(&mut tape, x)?;
        Ok(tape.value(y).item())
    };
    let f0 = eval(point.clone())?;
    (0..point.numel())
        .map(|i| {
            let mut p = point.clone();
            p.data_mut()[i] += eps;
            let fwd = (eval(p.clone())? - f0) / eps;
            p.data_mut()[i] -= 2.0 * eps;
            let bwd = (f0 - eval(p)?) / eps;
            Ok((fwd - bwd).abs() > 1e-6 * fwd.abs().max(bwd.abs()) + 1e-9)
        })
        .collect()
}

/// Values bounded away from zero, so that kinks stay out of the stencil.
fn away_from_zero(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| {
        let m = rng.gen_range(0.05..1.5);
        if rng.gen::<bool>() {
            m
        } else {
            -m
        }
    })
}

/// Run `instances` random instances of every operation (each operand
/// differentiated separately) and of the FTN-wrapped convolution, at a global
/// level and under a per-pixel map. Double precision throughout.
pub fn run_suite(instances: usize, epsilon: f64, seed: u64) -> Result<SuiteReport> {
    if instances == 0 || !(epsilon > 0.0) {
        return Err(Error::Config("gradient check needs instances > 0 and epsilon > 0".into()));
    }
    let (eps, mut rng) = (epsilon, ChaCha8Rng::seed_from_u64(seed));
    let mut tallies = Vec::new();

    // conv2d: input, weight, bias.
    let mut t = OpCheck::new("conv2d");
    for i in 0..instances {
        let (n, ci, co) = (rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=3));
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let pad = rng.gen_range(0..=k / 2);
        let (h, w) = (rng.gen_range(k.max(3)..=6), rng.gen_range(k.max(3)..=6));
        let x = normal(&mut rng, [n, ci, h, w], 1.0);
        let f = normal(&mut rng, [co, ci, k, k], 0.5);
        let b = normal(&mut rng, [1, co, 1, 1], 0.5);
        let s = i as u64;
        let (f1, b1) = (f.clone(), b.clone());
        t.add(grad_check(
            |tp, v| {
                let (fw, fb) = (tp.constant(f1.clone()), tp.constant(b1.clone()));
                let y = tp.conv2d(v, fw, fb, pad)?;
                project(tp, y, s)
            },
            &x,
            eps,
        ))?;
        let (x1, b1) = (x.clone(), b.clone());
        t.add(grad_check(
            |tp, v| {
                let (xi, fb) = (tp.constant(x1.clone()), tp.constant(b1.clone()));
                let y = tp.conv2d(xi, v, fb, pad)?;
                project(tp, y, s)
            },
            &f,
            eps,
        ))?;
        let (x1, f1) = (x.clone(), f.clone());
        t.add(grad_check(
            |tp, v| {
                let (xi, fw) = (tp.constant(x1.clone()), tp.constant(f1.clone()));
                let y = tp.conv2d(xi, fw, v, pad)?;
                project(tp, y, s)
            },
            &b,
            eps,
        ))?;
    }
    tallies.push(t);

    // grouped 1×1 convolution: input, weight, bias.
    let mut t = OpCheck::new("grouped_pointwise_conv");
    for i in 0..instances {
        let g = rng.gen_range(1..=3);
        let cg = rng.gen_range(1..=3);
        let c = g * cg;
        let (n, h, w) = (rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(1..=4));
        let x = normal(&mut rng, [n, c, h, w], 1.0);
        let wt = normal(&mut rng, [c, cg, 1, 1], 0.7);
        let b = normal(&mut rng, [1, c, 1, 1], 0.5);
        let s = 1000 + i as u64;
        let (w1, b1) = (wt.clone(), b.clone());
        t.add(grad_check(
            |tp, v| {
                let (a, bb) = (tp.constant(w1.clone()), tp.constant(b1.clone()));
                let y = tp.grouped_pointwise_conv(v, a, bb, g)?;
                project(tp, y, s)
            },
            &x,
            eps,
        ))?;
        let (x1, b1) = (x.clone(), b.clone());
        t.add(grad_check(
            |tp, v| {
                let (a, bb) = (tp.constant(x1.clone()), tp.constant(b1.clone()));
                let y = tp.grouped_pointwise_conv(a, v, bb, g)?;
                project(tp, y, s)
            },
            &wt,
            eps,
        ))?;
        let (x1, w1) = (x.clone(), wt.clone());
        t.add(grad_check(
            |tp, v| {
                let (a, ww) = (tp.constant(x1.clone()), tp.constant(w1.clone()));
                let y = tp.grouped_pointwise_conv(a, ww, v, g)?;
                project(tp, y, s)
            },
            &b,
            eps,
        ))?;
    }
    tallies.push(t);

    // PReLU: input (away from the kink) and slope.
    let mut t = OpCheck::new("prelu");
    for i in 0..instances {
        let n = rng.gen_range(1..=2);
        let x = away_from_zero(&mut rng, [n, 2, 3, 3]);
        let slope = Tensor::scalar(rng.gen_range(0.0..1.0));
        let s = 2000 + i as u64;
        let sl = slope.clone();
        t.add(grad_check(
            |tp, v| {
                let a = tp.constant(sl.clone());
                let y = tp.prelu(v, a)?;
                project(tp, y, s)
            },
            &x,
            eps,
        ))?;
        let x1 = x.clone();
        t.add(grad_check(
            |tp, v| {
                let a = tp.constant(x1.clone());
                let y = tp.prelu(a, v)?;
                project(tp, y, s)
            },
            &slope,
            eps,
        ))?;
    }
    tallies.push(t);

    // Global blend, per-pixel blend, add: both operands.
    let mut tb = OpCheck::new("blend");
    let mut tm = OpCheck::new("blend_map");
    let mut ta = OpCheck::new("add");
    for i in 0..instances {
        let dims = [rng.gen_range(1..=2), rng.gen_range(1..=3), 3, 4];
        let a = normal(&mut rng, dims, 1.0);
        let b = normal(&mut rng, dims, 1.0);
        let alpha = rng.gen_range(0.01..0.99);
        let map = uniform(&mut rng, [1, 1, 3, 4]);
        let s = 3000 + i as u64;
        for first in [true, false] {
            let (point, other) = if first { (&a, &b) } else { (&b, &a) };
            let o = other.clone();
            let pair = move |tp: &mut Tape<f64>, v: Var| {
                let c = tp.constant(o.clone());
                if first {
                    (v, c)
                } else {
                    (c, v)
                }
            };
            tb.add(grad_check(
                |tp, v| {
                    let (x, y) = pair(tp, v);
                    let z = tp.blend(x, y, alpha)?;
                    project(tp, z, s)
                },
                point,
                eps,
            ))?;
            tm.add(grad_check(
                |tp, v| {
                    let (x, y) = pair(tp, v);
                    let z = tp.blend_map(x, y, &map)?;
                    project(tp, z, s)
                },
                point,
                eps,
            ))?;
            ta.add(grad_check(
                |tp, v| {
                    let (x, y) = pair(tp, v);
                    let z = tp.add(x, y)?;
                    project(tp, z, s)
                },
                point,
                eps,
            ))?;
        }
    }
    tallies.extend([tb, tm, ta]);

    // Per-channel affine: input, scale, shift.
    let mut t = OpCheck::new("channel_affine");
    for i in 0..instances {
        let c = rng.gen_range(1..=4);
        let n = rng.gen_range(1..=3);
        let x = normal(&mut rng, [n, c, 2, 3], 1.0);
        let sc = normal(&mut rng, [1, c, 1, 1], 1.0);
        let sh = normal(&mut rng, [1, c, 1, 1], 1.0);
        let s = 4000 + i as u64;
        let args = [x, sc, sh];
        for which in 0..3 {
            let args2 = args.clone();
            t.add(grad_check(
                |tp, v| {
                    let mut vars = args2.iter().map(|a| tp.constant(a.clone())).collect::<Vec<_>>();
                    vars[which] = v;
                    let y = tp.channel_affine(vars[0], vars[1], vars[2])?;
                    project(tp, y, s)
                },
                &args[which],
                eps,
            ))?;
        }
    }
    tallies.push(t);

    // Axis swap, dot, scalar sum.
    let mut tsw = OpCheck::new("swap_nc");
    let mut tdot = OpCheck::new("dot");
    let mut tsum = OpCheck::new("sum_scalars");
    for i in 0..instances {
        let dims = [rng.gen_range(1..=3), rng.gen_range(1..=3), 2, 2];
        let x = normal(&mut rng, dims, 1.0);
        let s = 5000 + i as u64;
        tsw.add(grad_check(
            |tp, v| {
                let y = tp.swap_nc(v)?;
                project(tp, y, s)
            },
            &x,
            eps,
        ))?;
        tdot.add(grad_check(|tp, v| project(tp, v, s), &x, eps))?;
        let other = Tensor::scalar(rng.gen_range(-2.0..2.0));
        let point = Tensor::scalar(rng.gen_range(-2.0..2.0));
        tsum.add(grad_check(
            |tp, v| {
                let o = tp.constant(other.clone());
                let y = tp.sum_scalars(v, o)?;
                tp.dot(y, Tensor::scalar(1.7))
            },
            &point,
            eps,
        ))?;
    }
    tallies.extend([tsw, tdot, tsum]);

    // Losses: prediction and target; L1 skips coordinates next to its kink.
    let mut t2 = OpCheck::new("loss_l2");
    let mut t1 = OpCheck::new("loss_l1");
    for _ in 0..instances {
        let dims = [rng.gen_range(1..=3), rng.gen_range(1..=2), 3, 3];
        let p = normal(&mut rng, dims, 1.0);
        let q = normal(&mut rng, dims, 1.0);
        for first in [true, false] {
            let (point, other) = if first { (&p, &q) } else { (&q, &p) };
            let o = other.clone();
            let pair = move |tp: &mut Tape<f64>, v: Var| {
                let c = tp.constant(o.clone());
                if first {
                    (v, c)
                } else {
                    (c, v)
                }
            };
            t2.add(grad_check(
                |tp, v| {
                    let (a, b) = pair(tp, v);
                    tp.loss_l2(a, b)
                },
                point,
                eps,
            ))?;
            let near_kink = |i: usize| (point.data()[i] - other.data()[i]).abs() < 2.0 * eps;
            t1.add(grad_check_excluding(
                |tp, v| {
                    let (a, b) = pair(tp, v);
                    tp.loss_l1(a, b)
                },
                point,
                eps,
                near_kink,
            ))?;
        }
    }
    tallies.extend([t2, t1]);

    // The FTN-wrapped convolution: x, f, b, b₂ and every FTN parameter, at a
    // global level or under a per-pixel map.
    let mut t = OpCheck::new("ftn_wrapped_conv");
    for i in 0..instances {
        let g = [1, 2, 4][rng.gen_range(0..3)];
        let co = g * rng.gen_range(1..=2);
        let ci = rng.gen_range(1..=3);
        let depth = rng.gen_range(2..=3);
        let ftn = random_ftn(&mut rng, co, g, depth, 0.3);
        let n = rng.gen_range(1..=2);
        let x = normal(&mut rng, [n, ci, 4, 4], 1.0);
        let f = normal(&mut rng, [co, ci, 3, 3], 0.5);
        let b = normal(&mut rng, [1, co, 1, 1], 0.3);
        let b2 = normal(&mut rng, [1, co, 1, 1], 0.3);
        let alpha = rng.gen_range(0.05..0.95);
        let map = uniform(&mut rng, [1, 1, 4, 4]);
        let pixelwise = i % 2 == 1;
        let s = 6000 + i as u64;

        let mut named: Vec<(String, Tensor<f64>)> =
            vec![("x".into(), x), ("f".into(), f), ("b".into(), b), ("b2".into(), b2)];
        for (n, v) in ftn.named_params() {
            named.push((format!("ftn.{n}"), v.clone()));
        }
        for (target, point) in &named {
            let layer = |tp: &mut Tape<f64>, v: Var| -> Result<Var> {
                let bind_top = |tp: &mut Tape<f64>, name: &str| -> Var {
                    if name == target {
                        v
                    } else {
                        let t = named.iter().find(|(n, _)| n == name).expect("known").1.clone();
                        tp.constant(t)
                    }
                };
                let xv = bind_top(tp, "x");
                let fv = bind_top(tp, "f");
                let bv = bind_top(tp, "b");
                let moved = ftn.record(tp, fv, &mut |tp, n, _| bind_top(tp, &format!("ftn.{n}")))?;
                let b2v = bind_top(tp, "b2");
                let y = if pixelwise {
                    let y0 = tp.conv2d(xv, fv, bv, 1)?;
                    let y1 = tp.conv2d(xv, moved, b2v, 1)?;
                    tp.blend_map(y0, y1, &map)?
                } else {
                    let we = tp.blend(fv, moved, alpha)?;
                    let be = tp.blend(bv, b2v, alpha)?;
                    tp.conv2d(xv, we, be, 1)?
                };
                project(tp, y, s)
            };
            let skip = kinked(&layer, point, eps)?;
            t.add(grad_check_excluding(layer, point, eps, |i| skip[i]))?;
        }
    }
    tallies.push(t);

    Ok(SuiteReport { epsilon, ops: tallies })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let r = run_suite(2, 1e-4, 3).unwrap();
        assert!(r.passed(1e-6), "{}", r.to_csv());
        assert!(r.ops.iter().all(|o| o.checks >= 2));
        assert_eq!(r.to_csv().lines().count(), r.ops.len() + 1);
    }
}
