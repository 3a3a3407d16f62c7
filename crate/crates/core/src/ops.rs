//! Forward and backward kernels for the closed operation set.
//!
//! Every kernel reduces in a fixed order (batch index outermost, then the
//! operation's natural loop order), so results are bit-reproducible.

use crate::error::{Error, Result};
use crate::tensor::{ensure_same_dims, Dims, Scalar, Tensor};

/// Gradients produced by [`conv2d_backward`]. Entries are `None` when the
/// caller did not ask for them.
#[derive(Debug)]
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

fn check_conv<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    padding: usize,
) -> Result<()> {
    let (x, f) = (input.dims(), weight.dims());
    if x.c != f.c {
        return Err(Error::dims(
            "conv2d",
            format!("input axis C = {} but filters expect C_in = {}", x.c, f.c),
        ));
    }
    if f.h % 2 == 0 || f.w % 2 == 0 {
        return Err(Error::dims(
            "conv2d",
            format!("kernel {}x{} must have odd extents", f.h, f.w),
        ));
    }
    if bias.dims() != Dims::new(1, f.n, 1, 1) {
        return Err(Error::dims(
            "conv2d",
            format!("bias dims {} do not match C_out = {}", bias.dims(), f.n),
        ));
    }
    if x.h + 2 * padding < f.h || x.w + 2 * padding < f.w {
        return Err(Error::dims(
            "conv2d",
            format!("kernel {}x{} larger than padded input {}", f.h, f.w, x),
        ));
    }
    Ok(())
}

fn conv_out_dims(x: Dims, f: Dims, padding: usize) -> Dims {
    Dims::new(
        x.n,
        f.n,
        x.h + 2 * padding + 1 - f.h,
        x.w + 2 * padding + 1 - f.w,
    )
}

/// Unfold one image (C, H, W) into a (C·KH·KW) × (OH·OW) column matrix.
fn im2col<T: Scalar>(
    img: &[T],
    x: Dims,
    kh: usize,
    kw: usize,
    padding: usize,
    out: Dims,
    cols: &mut [T],
) {
    let plane = out.h * out.w;
    let mut row = 0;
    for c in 0..x.c {
        let src = &img[c * x.h * x.w..(c + 1) * x.h * x.w];
        for i in 0..kh {
            for j in 0..kw {
                let dst = &mut cols[row * plane..(row + 1) * plane];
                let (lo, hi) = valid_span(out.w, x.w, j, padding);
                for oy in 0..out.h {
                    let line = &mut dst[oy * out.w..(oy + 1) * out.w];
                    let iy = (oy + i).wrapping_sub(padding);
                    if iy >= x.h || lo >= hi {
                        line.fill(T::zero());
                        continue;
                    }
                    line[..lo].fill(T::zero());
                    line[hi..].fill(T::zero());
                    let s = iy * x.w + lo + j - padding;
                    line[lo..hi].copy_from_slice(&src[s..s + (hi - lo)]);
                }
                row += 1;
            }
        }
    }
}

/// Output columns `[lo, hi)` whose tap at kernel offset `j` lands inside an
/// input row of length `in_w`.
fn valid_span(out_w: usize, in_w: usize, j: usize, padding: usize) -> (usize, usize) {
    let lo = padding.saturating_sub(j);
    let hi = (in_w + padding).saturating_sub(j).min(out_w);
    (lo, hi.max(lo))
}

/// `dst` (cols×rows) = transpose of row-major `src` (rows×cols).
fn transpose<T: Copy>(src: &[T], rows: usize, cols: usize, dst: &mut [T]) {
    const B: usize = 32;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Scatter-add a column matrix back into image layout (adjoint of im2col).
fn col2im<T: Scalar>(
    cols: &[T],
    x: Dims,
    kh: usize,
    kw: usize,
    padding: usize,
    out: Dims,
    img: &mut [T],
) {
    let plane = out.h * out.w;
    let mut row = 0;
    for c in 0..x.c {
        let dst = &mut img[c * x.h * x.w..(c + 1) * x.h * x.w];
        for i in 0..kh {
            for j in 0..kw {
                let src = &cols[row * plane..(row + 1) * plane];
                let (lo, hi) = valid_span(out.w, x.w, j, padding);
                for oy in 0..out.h {
                    let iy = (oy + i).wrapping_sub(padding);
                    if iy >= x.h || lo >= hi {
                        continue;
                    }
                    let d = iy * x.w + lo + j - padding;
                    for (a, &b) in dst[d..d + (hi - lo)].iter_mut().zip(&src[oy * out.w + lo..oy * out.w + hi]) {
                        *a += b;
                    }
                }
                row += 1;
            }
        }
    }
}

/// Stride-1 zero-padded cross-correlation. `weight` is (C_out, C_in, KH, KW),
/// `bias` is (1, C_out, 1, 1).
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    padding: usize,
) -> Result<Tensor<T>> {
    check_conv(input, weight, bias, padding)?;
    let (x, f) = (input.dims(), weight.dims());
    let out = conv_out_dims(x, f, padding);
    let k = f.c * f.h * f.w;
    let plane = out.h * out.w;
    let mut result = Tensor::zeros(out);
    let mut cols = vec![T::zero(); k * plane];
    let in_stride = x.c * x.h * x.w;
    let out_stride = out.c * plane;
    for n in 0..x.n {
        let img = &input.data()[n * in_stride..(n + 1) * in_stride];
        let dst = &mut result.data_mut()[n * out_stride..(n + 1) * out_stride];
        for (c, chunk) in dst.chunks_mut(plane).enumerate() {
            chunk.fill(bias.data()[c]);
        }
        im2col(img, x, f.h, f.w, padding, out, &mut cols);
        T::gemm(f.n, k, plane, weight.data(), false, &cols, false, dst, true);
    }
    Ok(result)
}

/// Gradients of [`conv2d`] with respect to its input, filters and bias.
pub fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    padding: usize,
    need_input: bool,
    need_params: bool,
) -> Result<ConvGrads<T>> {
    let (x, f) = (input.dims(), weight.dims());
    if x.c != f.c {
        return Err(Error::dims(
            "conv2d_backward",
            format!("input axis C = {} but filters expect C_in = {}", x.c, f.c),
        ));
    }
    let out = conv_out_dims(x, f, padding);
    if grad_out.dims() != out {
        return Err(Error::dims(
            "conv2d_backward",
            format!("grad_out dims {} but forward produced {}", grad_out.dims(), out),
        ));
    }
    let k = f.c * f.h * f.w;
    let plane = out.h * out.w;
    let in_stride = x.c * x.h * x.w;
    let out_stride = out.c * plane;

    let mut grad_input = need_input.then(|| Tensor::zeros(x));
    let mut grad_weight = need_params.then(|| Tensor::zeros(f));
    let mut grad_bias = need_params.then(|| Tensor::zeros(Dims::new(1, f.n, 1, 1)));
    let mut cols = vec![T::zero(); k * plane];
    // Filter gradient accumulated transposed, (K, C_out), from the column
    // matrix and a transposed copy of the (small) output gradient.
    let mut gw_t = vec![T::zero(); if need_params { k * f.n } else { 0 }];
    let mut g_t = vec![T::zero(); if need_params { plane * f.n } else { 0 }];

    for n in 0..x.n {
        let g = &grad_out.data()[n * out_stride..(n + 1) * out_stride];
        if let Some(gb) = grad_bias.as_mut() {
            let img = &input.data()[n * in_stride..(n + 1) * in_stride];
            im2col(img, x, f.h, f.w, padding, out, &mut cols);
            transpose(g, f.n, plane, &mut g_t);
            T::gemm(k, plane, f.n, &cols, false, &g_t, false, &mut gw_t, true);
            for (c, chunk) in g.chunks(plane).enumerate() {
                let s: T = chunk.iter().copied().sum();
                gb.data_mut()[c] += s;
            }
        }
        if let Some(gi) = grad_input.as_mut() {
            T::gemm(k, f.n, plane, weight.data(), true, g, false, &mut cols, false);
            let dst = &mut gi.data_mut()[n * in_stride..(n + 1) * in_stride];
            col2im(&cols, x, f.h, f.w, padding, out, dst);
        }
    }
    if let Some(gw) = grad_weight.as_mut() {
        transpose(&gw_t, k, f.n, gw.data_mut());
    }
    Ok(ConvGrads {
        input: grad_input,
        weight: grad_weight,
        bias: grad_bias,
    })
}

fn check_grouped<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    groups: usize,
) -> Result<usize> {
    let c = input.dims().c;
    if groups == 0 || c % groups != 0 {
        return Err(Error::Config(format!(
            "group count {groups} does not divide channel count {c}"
        )));
    }
    let cg = c / groups;
    if weight.dims() != Dims::new(c, cg, 1, 1) {
        return Err(Error::dims(
            "grouped_pointwise_conv",
            format!("weights {} but expected ({c}, {cg}, 1, 1)", weight.dims()),
        ));
    }
    if bias.dims() != Dims::new(1, c, 1, 1) {
        return Err(Error::dims(
            "grouped_pointwise_conv",
            format!("bias {} but expected (1, {c}, 1, 1)", bias.dims()),
        ));
    }
    Ok(cg)
}

/// Grouped 1×1 convolution. Output channel `o` of group `g` is
/// `bias[o] + Σ_j weight[o, j] · input[g·C/G + j]`.
pub fn grouped_pointwise_conv<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    groups: usize,
) -> Result<Tensor<T>> {
    let cg = check_grouped(input, weight, bias, groups)?;
    let d = input.dims();
    let plane = d.plane();
    let mut out = Tensor::zeros(d);
    let (src, w, b) = (input.data(), weight.data(), bias.data());
    let dst = out.data_mut();
    for n in 0..d.n {
        for o in 0..d.c {
            let base = (o / cg) * cg;
            let line = &mut dst[(n * d.c + o) * plane..(n * d.c + o + 1) * plane];
            line.fill(b[o]);
            for j in 0..cg {
                let wv = w[o * cg + j];
                let s = &src[(n * d.c + base + j) * plane..(n * d.c + base + j + 1) * plane];
                for (y, &v) in line.iter_mut().zip(s) {
                    *y += wv * v;
                }
            }
        }
    }
    Ok(out)
}

/// Returns (grad_input, grad_weight, grad_bias).
pub fn grouped_pointwise_conv_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    groups: usize,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let d = input.dims();
    let c = d.c;
    if groups == 0 || c % groups != 0 {
        return Err(Error::Config(format!(
            "group count {groups} does not divide channel count {c}"
        )));
    }
    ensure_same_dims("grouped_pointwise_conv_backward", grad_out, input)?;
    let cg = c / groups;
    let plane = d.plane();
    let mut gi = Tensor::zeros(d);
    let mut gw = Tensor::zeros(weight.dims());
    let mut gb = Tensor::zeros(Dims::new(1, c, 1, 1));
    let (g, src, w) = (grad_out.data(), input.data(), weight.data());
    for n in 0..d.n {
        for o in 0..c {
            let base = (o / cg) * cg;
            let gl = &g[(n * c + o) * plane..(n * c + o + 1) * plane];
            gb.data_mut()[o] += gl.iter().copied().sum::<T>();
            for j in 0..cg {
                let ch = n * c + base + j;
                let s = &src[ch * plane..(ch + 1) * plane];
                let mut acc = T::zero();
                for (&gv, &sv) in gl.iter().zip(s) {
                    acc += gv * sv;
                }
                gw.data_mut()[o * cg + j] += acc;
                let wv = w[o * cg + j];
                let dst = &mut gi.data_mut()[ch * plane..(ch + 1) * plane];
                for (dv, &gv) in dst.iter_mut().zip(gl) {
                    *dv += wv * gv;
                }
            }
        }
    }
    Ok((gi, gw, gb))
}

/// `max(0, x) + slope · min(0, x)`.
pub fn prelu<T: Scalar>(input: &Tensor<T>, slope: T) -> Tensor<T> {
    input.map(|x| if x >= T::zero() { x } else { slope * x })
}

/// Returns (grad_input, grad_slope). At exactly `x = 0` the positive branch
/// is used.
pub fn prelu_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    slope: T,
) -> Result<(Tensor<T>, T)> {
    ensure_same_dims("prelu_backward", grad_out, input)?;
    let mut grad_slope = T::zero();
    let gi = Tensor::from_fn(input.dims(), |i| {
        let (x, g) = (input.data()[i], grad_out.data()[i]);
        if x >= T::zero() {
            g
        } else {
            grad_slope += x * g;
            slope * g
        }
    });
    Ok((gi, grad_slope))
}

/// `(1 − α)·a + α·b`. Range checking of α is the caller's job. The endpoints
/// return exact copies of `a` and `b`.
pub fn blend<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, alpha: T) -> Result<Tensor<T>> {
    ensure_same_dims("blend", a, b)?;
    if alpha == T::zero() {
        return Ok(a.clone());
    }
    if alpha == T::one() {
        return Ok(b.clone());
    }
    let keep = T::one() - alpha;
    Ok(Tensor::from_fn(a.dims(), |i| {
        keep * a.data()[i] + alpha * b.data()[i]
    }))
}

fn check_map<T: Scalar>(a: &Tensor<T>, map: &Tensor<T>) -> Result<()> {
    let (d, m) = (a.dims(), map.dims());
    if m.n != 1 || m.c != 1 || m.h != d.h || m.w != d.w {
        return Err(Error::dims(
            "blend_map",
            format!("level map {m} does not broadcast over feature map {d}"),
        ));
    }
    Ok(())
}

/// `(1 − A) ⊙ a + A ⊙ b` with a (1, 1, H, W) map broadcast over N and C.
pub fn blend_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, map: &Tensor<T>) -> Result<Tensor<T>> {
    ensure_same_dims("blend_map", a, b)?;
    check_map(a, map)?;
    let plane = a.dims().plane();
    Ok(Tensor::from_fn(a.dims(), |i| {
        let m = map.data()[i % plane];
        (T::one() - m) * a.data()[i] + m * b.data()[i]
    }))
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    ensure_same_dims("add", a, b)?;
    Ok(Tensor::from_fn(a.dims(), |i| a.data()[i] + b.data()[i]))
}

/// Per-channel `scale[c]·x + shift[c]`; `scale` and `shift` are (1, C, 1, 1).
pub fn channel_affine<T: Scalar>(
    input: &Tensor<T>,
    scale: &Tensor<T>,
    shift: &Tensor<T>,
) -> Result<Tensor<T>> {
    let d = input.dims();
    let want = Dims::new(1, d.c, 1, 1);
    if scale.dims() != want || shift.dims() != want {
        return Err(Error::dims(
            "channel_affine",
            format!(
                "scale {} / shift {} must be (1, {}, 1, 1)",
                scale.dims(),
                shift.dims(),
                d.c
            ),
        ));
    }
    let plane = d.plane();
    Ok(Tensor::from_fn(d, |i| {
        let c = (i / plane) % d.c;
        scale.data()[c] * input.data()[i] + shift.data()[c]
    }))
}

/// Returns (grad_input, grad_scale, grad_shift).
pub fn channel_affine_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    scale: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    ensure_same_dims("channel_affine_backward", grad_out, input)?;
    let d = input.dims();
    let plane = d.plane();
    let mut gs = Tensor::zeros(scale.dims());
    let mut gb = Tensor::zeros(scale.dims());
    let gi = Tensor::from_fn(d, |i| {
        let c = (i / plane) % d.c;
        let g = grad_out.data()[i];
        gs.data_mut()[c] += g * input.data()[i];
        gb.data_mut()[c] += g;
        scale.data()[c] * g
    });
    Ok((gi, gs, gb))
}

/// Exchange the N and C axes: (N, C, H, W) → (C, N, H, W).
pub fn swap_nc<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let d = input.dims();
    let out = Dims::new(d.c, d.n, d.h, d.w);
    let plane = d.plane();
    let mut t = Tensor::zeros(out);
    for n in 0..d.n {
        for c in 0..d.c {
            let s = &input.data()[(n * d.c + c) * plane..(n * d.c + c + 1) * plane];
            t.data_mut()[(c * d.n + n) * plane..(c * d.n + n + 1) * plane].copy_from_slice(s);
        }
    }
    t
}

pub fn mse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    ensure_same_dims("loss_l2", pred, target)?;
    let n = T::of(pred.numel() as f64);
    let s: T = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(s / n)
}

pub fn mse_backward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, grad: T) -> Tensor<T> {
    let scale = grad * T::of(2.0) / T::of(pred.numel() as f64);
    Tensor::from_fn(pred.dims(), |i| scale * (pred.data()[i] - target.data()[i]))
}

pub fn l1<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    ensure_same_dims("loss_l1", pred, target)?;
    let n = T::of(pred.numel() as f64);
    let s: T = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t).abs())
        .sum();
    Ok(s / n)
}

/// Subgradient `sign(pred − target) / count`, zero where they coincide.
pub fn l1_backward<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, grad: T) -> Tensor<T> {
    let scale = grad / T::of(pred.numel() as f64);
    Tensor::from_fn(pred.dims(), |i| {
        let d = pred.data()[i] - target.data()[i];
        if d > T::zero() {
            scale
        } else if d < T::zero() {
            -scale
        } else {
            T::zero()
        }
    })
}

/// `Σ x ⊙ w` for a constant weight tensor; used to project tensors to scalars.
pub fn dot<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>) -> Result<T> {
    ensure_same_dims("dot", x, w)?;
    Ok(x.data().iter().zip(w.data()).map(|(&a, &b)| a * b).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(dims: [usize; 4], v: &[f64]) -> Tensor<f64> {
        Tensor::new(dims, v.to_vec()).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor<f64> {
        Tensor::from_fn(dims, |_| rng.gen_range(-1.0..1.0))
    }

    /// Direct summation, independent of the im2col/GEMM path.
    fn conv_reference(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, p: usize) -> Tensor<f64> {
        let (xd, wd) = (x.dims(), w.dims());
        let (oh, ow) = (xd.h + 2 * p + 1 - wd.h, xd.w + 2 * p + 1 - wd.w);
        let mut out = Tensor::zeros([xd.n, wd.n, oh, ow]);
        for n in 0..xd.n {
            for o in 0..wd.n {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut s = b.data()[o];
                        for c in 0..xd.c {
                            for i in 0..wd.h {
                                for j in 0..wd.w {
                                    let iy = y as isize + i as isize - p as isize;
                                    let ix = xx as isize + j as isize - p as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < xd.h && (ix as usize) < xd.w {
                                        s += w.at(o, c, i, j) * x.at(n, c, iy as usize, ix as usize);
                                    }
                                }
                            }
                        }
                        let idx = out.dims().index(n, o, y, xx);
                        out.data_mut()[idx] = s;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_scales_by_pointwise_kernel() {
        let x = t([1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let w = t([1, 1, 1, 1], &[2.0]);
        let b = Tensor::zeros([1, 1, 1, 1]);
        let y = conv2d(&x, &w, &b, 0).unwrap();
        assert_eq!(y.data(), &[2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn conv_identity_pointwise_kernel_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, [2, 3, 5, 4]);
        let w = Tensor::from_fn([3, 3, 1, 1], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        let b = Tensor::zeros([1, 3, 1, 1]);
        assert!(conv2d(&x, &w, &b, 0).unwrap().bit_eq(&x));
    }

    #[test]
    fn conv_ones_center_and_corner() {
        let x = Tensor::<f64>::full([1, 1, 3, 3], 1.0);
        let w = Tensor::full([1, 1, 3, 3], 1.0);
        let b = Tensor::zeros([1, 1, 1, 1]);
        let y = conv2d(&x, &w, &b, 1).unwrap();
        assert_eq!(y.dims(), Dims::new(1, 1, 3, 3));
        assert_eq!(y.at(0, 0, 1, 1), 9.0);
        assert_eq!(y.at(0, 0, 0, 0), 4.0);
        assert_eq!(y, conv_reference(&x, &w, &b, 1));
    }

    #[test]
    fn conv_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(p, k) in &[(0, 1), (1, 3), (0, 3), (2, 5)] {
            let x = random(&mut rng, [2, 3, 6, 5]);
            let w = random(&mut rng, [4, 3, k, k]);
            let b = random(&mut rng, [1, 4, 1, 1]);
            let fast = conv2d(&x, &w, &b, p).unwrap();
            let slow = conv_reference(&x, &w, &b, p);
            assert!(fast.max_abs_diff(&slow) < 1e-12, "p={p} k={k}");
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = Tensor::<f32>::zeros([1, 2, 4, 4]);
        let w = Tensor::zeros([3, 4, 3, 3]);
        let b = Tensor::zeros([1, 3, 1, 1]);
        let err = conv2d(&x, &w, &b, 1).unwrap_err().to_string();
        assert!(err.contains("axis C") && err.contains("C_in"), "{err}");
    }

    #[test]
    fn conv_backward_scalar_product_rule() {
        let x = t([1, 1, 1, 1], &[3.0]);
        let w = t([1, 1, 1, 1], &[-2.0]);
        let g = conv2d_backward(&t([1, 1, 1, 1], &[1.0]), &x, &w, 0, true, true).unwrap();
        assert_eq!(g.weight.unwrap().data(), &[3.0]);
        assert_eq!(g.input.unwrap().data(), &[-2.0]);
        assert_eq!(g.bias.unwrap().data(), &[1.0]);
    }

    #[test]
    fn conv_backward_zero_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, [1, 2, 4, 4]);
        let w = random(&mut rng, [3, 2, 3, 3]);
        let g = conv2d_backward(&Tensor::zeros([1, 3, 4, 4]), &x, &w, 1, true, true).unwrap();
        assert!(g.input.unwrap().data().iter().all(|&v| v == 0.0));
        assert!(g.weight.unwrap().data().iter().all(|&v| v == 0.0));
        assert!(g.bias.unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grouped_identity_and_doubling() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(&mut rng, [3, 4, 2, 3]);
        let id = Tensor::from_fn([4, 2, 1, 1], |i| if i / 2 % 2 == i % 2 { 1.0 } else { 0.0 });
        let zero = Tensor::zeros([1, 4, 1, 1]);
        assert!(grouped_pointwise_conv(&x, &id, &zero, 2).unwrap().bit_eq(&x));
        let two = Tensor::full([4, 1, 1, 1], 2.0);
        let y = grouped_pointwise_conv(&x, &two, &zero, 4).unwrap();
        assert_eq!(y, x.map(|v| 2.0 * v));
    }

    #[test]
    fn grouped_equals_dense_on_halves() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, [2, 4, 3, 3]);
        let w = random(&mut rng, [4, 2, 1, 1]);
        let b = random(&mut rng, [1, 4, 1, 1]);
        let y = grouped_pointwise_conv(&x, &w, &b, 2).unwrap();
        for g in 0..2 {
            let xh = Tensor::from_fn([2, 2, 3, 3], |i| {
                let (n, r) = (i / 18, i % 18);
                x.data()[n * 36 + g * 18 + r]
            });
            let wh = Tensor::from_fn([2, 2, 1, 1], |i| w.data()[g * 4 + i]);
            let bh = Tensor::from_fn([1, 2, 1, 1], |i| b.data()[g * 2 + i]);
            let dense = conv_reference(&xh, &wh, &bh, 0);
            for n in 0..2 {
                for c in 0..2 {
                    for p in 0..9 {
                        let got = y.data()[n * 36 + (g * 2 + c) * 9 + p];
                        let want = dense.data()[n * 18 + c * 9 + p];
                        assert!((got - want).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn grouped_rejects_indivisible() {
        let x = Tensor::<f32>::zeros([1, 6, 1, 1]);
        let w = Tensor::zeros([6, 1, 1, 1]);
        let b = Tensor::zeros([1, 6, 1, 1]);
        assert!(matches!(
            grouped_pointwise_conv(&x, &w, &b, 4),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn prelu_values() {
        let x = t([1, 1, 1, 3], &[3.0, -2.0, -7.0]);
        assert_eq!(prelu(&x, 0.25).data(), &[3.0, -0.5, -1.75]);
        assert_eq!(prelu(&x, 1.0).data(), x.data());
    }

    #[test]
    fn prelu_slope_gradient_sums_negative_part() {
        let x = t([1, 1, 1, 4], &[1.0, -2.0, 0.0, -0.5]);
        let g = t([1, 1, 1, 4], &[1.0, 2.0, 3.0, 4.0]);
        let (gi, gs) = prelu_backward(&g, &x, 0.5).unwrap();
        assert_eq!(gs, -2.0 * 2.0 - 0.5 * 4.0);
        assert_eq!(gi.data(), &[1.0, 1.0, 3.0, 2.0]);
    }

    #[test]
    fn blend_endpoints_and_midpoint() {
        let a = t([1, 1, 1, 1], &[2.0]);
        let b = t([1, 1, 1, 1], &[4.0]);
        assert_eq!(blend(&a, &b, 0.0).unwrap(), a);
        assert_eq!(blend(&a, &b, 1.0).unwrap(), b);
        assert_eq!(blend(&a, &b, 0.25).unwrap().data(), &[2.5]);
        assert!(blend(&a, &Tensor::zeros([1, 1, 1, 2]), 0.5).is_err());
    }

    #[test]
    fn losses_closed_form() {
        let p = Tensor::<f64>::zeros([1, 1, 2, 2]);
        let q = Tensor::full([1, 1, 2, 2], 0.5);
        assert_eq!(mse(&p, &q).unwrap(), 0.25);
        assert_eq!(l1(&p, &q).unwrap(), 0.5);
        assert_eq!(mse(&q, &q).unwrap(), 0.0);
        assert_eq!(l1(&q, &q).unwrap(), 0.0);
    }

    #[test]
    fn swap_nc_is_an_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random(&mut rng, [2, 3, 2, 2]);
        let s = swap_nc(&x);
        assert_eq!(s.dims(), Dims::new(3, 2, 2, 2));
        assert_eq!(s.at(2, 1, 1, 0), x.at(1, 2, 1, 0));
        assert_eq!(swap_nc(&s), x);
    }

    #[test]
    fn blend_map_rejects_wrong_spatial_size() {
        let a = Tensor::<f32>::zeros([1, 2, 4, 4]);
        let m = Tensor::zeros([1, 1, 4, 3]);
        assert!(blend_map(&a, &a, &m).is_err());
    }
}
