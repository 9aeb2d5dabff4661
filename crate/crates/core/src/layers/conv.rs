//! 2-D cross-correlation and its adjoint (transposed convolution).
//!
//! All three products (forward, input gradient, kernel gradient) run on
//! im2col patch matrices over fixed bands of output rows. The band partition
//! depends only on the geometry, never on the thread count, and partial
//! reductions are summed in band order, so results are bitwise independent
//! of parallelism.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Target number of output pixels per band.
const BAND_PIXELS: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn new(stride: usize, padding: usize) -> Self {
        Self { stride, padding }
    }

    /// Stride 1 with `floor(k / 2)` padding, preserving spatial size for odd kernels.
    pub fn same(kernel: usize) -> Self {
        Self {
            stride: 1,
            padding: kernel / 2,
        }
    }
}

impl Default for ConvGeom {
    fn default() -> Self {
        Self::new(1, 0)
    }
}

/// Owned convolution parameters: kernel `out x in x kh x kw`, bias `out`.
#[derive(Clone, Debug)]
pub struct ConvParams<S = f32> {
    pub kernel: Tensor<S>,
    pub bias: Tensor<S>,
    pub geom: ConvGeom,
}

impl<S: Scalar> ConvParams<S> {
    pub fn new(kernel: Tensor<S>, bias: Tensor<S>, stride: usize, padding: usize) -> Result<Self> {
        let dims = kernel_dims(&kernel)?;
        if stride == 0 {
            return Err(Error::shape("stride must be at least 1"));
        }
        if bias.shape() != [dims.0] {
            return Err(Error::shape(format!(
                "bias shape {:?} does not match {} output channels",
                bias.shape(),
                dims.0
            )));
        }
        Ok(Self {
            kernel,
            bias,
            geom: ConvGeom::new(stride, padding),
        })
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        conv2d_forward(x, &self.kernel, &self.bias, self.geom)
    }

    pub fn backward(&self, x: &Tensor<S>, grad_out: &Tensor<S>) -> Result<ConvGrads<S>> {
        conv2d_backward(x, &self.kernel, self.geom, grad_out)
    }
}

/// Gradients of a (transposed) convolution.
#[derive(Clone, Debug)]
pub struct ConvGrads<S = f32> {
    pub input: Tensor<S>,
    pub kernel: Tensor<S>,
    pub bias: Tensor<S>,
}

fn kernel_dims<S: Scalar>(k: &Tensor<S>) -> Result<(usize, usize, usize, usize)> {
    match k.shape() {
        &[o, i, kh, kw] => Ok((o, i, kh, kw)),
        s => Err(Error::shape(format!(
            "kernel must be out x in x kh x kw, got {s:?}"
        ))),
    }
}

/// Output extent of a cross-correlation along one axis.
pub fn conv_output_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 {
        return Err(Error::shape("stride and kernel extent must be at least 1"));
    }
    let padded = input + 2 * padding;
    if padded < kernel {
        return Err(Error::shape(format!(
            "kernel {kernel} larger than padded input {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Output extent of a transposed convolution: `(n - 1) * stride - 2 * padding + kernel`.
pub fn transposed_output_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 || input == 0 {
        return Err(Error::shape("stride, kernel and input extents must be at least 1"));
    }
    let full = (input - 1) * stride + kernel;
    if full <= 2 * padding {
        return Err(Error::shape(format!(
            "transposed convolution output extent {full} - 2*{padding} is not positive"
        )));
    }
    Ok(full - 2 * padding)
}

/// Geometry of one cross-correlation `cin x h x w -> cout x oh x ow`.
#[derive(Clone, Copy, Debug)]
struct Plan {
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Plan {
    fn new(input: (usize, usize, usize), kernel: (usize, usize, usize, usize), geom: ConvGeom) -> Result<Self> {
        let (cin, h, w) = input;
        let (cout, kin, kh, kw) = kernel;
        if kin != cin {
            return Err(Error::shape(format!(
                "input has {cin} channels, kernel expects {kin}"
            )));
        }
        let oh = conv_output_extent(h, kh, geom.stride, geom.padding)?;
        let ow = conv_output_extent(w, kw, geom.stride, geom.padding)?;
        Ok(Self {
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            stride: geom.stride,
            pad: geom.padding,
            oh,
            ow,
        })
    }

    /// Patch length `cin * kh * kw`.
    fn patch(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn out_pixels(&self) -> usize {
        self.oh * self.ow
    }

    /// Fixed partition of output rows into bands.
    fn bands(&self) -> Vec<(usize, usize)> {
        let rows = BAND_PIXELS.div_ceil(self.ow).max(1);
        (0..self.oh)
            .step_by(rows)
            .map(|r0| (r0, (r0 + rows).min(self.oh)))
            .collect()
    }

    /// Input rows touched by output rows `[r0, r1)`, clipped to the image.
    fn input_rows(&self, r0: usize, r1: usize) -> (usize, usize) {
        let lo = (r0 * self.stride).saturating_sub(self.pad);
        let hi = ((r1 - 1) * self.stride + self.kh).saturating_sub(self.pad).min(self.h);
        (lo, hi.max(lo))
    }

    /// Patch matrix for output rows `[r0, r1)` in `(patch index, pixel)` layout.
    fn im2col<S: Scalar>(&self, x: &[S], r0: usize, r1: usize) -> Vec<S> {
        let np = (r1 - r0) * self.ow;
        let mut cols = vec![S::zero(); self.patch() * np];
        for c in 0..self.cin {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for di in 0..self.kh {
                for dj in 0..self.kw {
                    let q = (c * self.kh + di) * self.kw + dj;
                    let row = &mut cols[q * np..(q + 1) * np];
                    for i in r0..r1 {
                        let src_r = (i * self.stride + di) as isize - self.pad as isize;
                        if src_r < 0 || src_r >= self.h as isize {
                            continue;
                        }
                        let src = &plane[src_r as usize * self.w..(src_r as usize + 1) * self.w];
                        let dst = &mut row[(i - r0) * self.ow..(i - r0 + 1) * self.ow];
                        for (j, d) in dst.iter_mut().enumerate() {
                            let src_c = (j * self.stride + dj) as isize - self.pad as isize;
                            if src_c >= 0 && src_c < self.w as isize {
                                *d = src[src_c as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Scatter-adds a band's patch-gradient matrix into a buffer holding
    /// input rows `[lo, hi)` of every channel.
    fn col2im<S: Scalar>(&self, gcols: &[S], r0: usize, r1: usize, lo: usize, hi: usize) -> Vec<S> {
        let np = (r1 - r0) * self.ow;
        let rows = hi - lo;
        let mut buf = vec![S::zero(); self.cin * rows * self.w];
        for c in 0..self.cin {
            let plane = &mut buf[c * rows * self.w..(c + 1) * rows * self.w];
            for di in 0..self.kh {
                for dj in 0..self.kw {
                    let q = (c * self.kh + di) * self.kw + dj;
                    let row = &gcols[q * np..(q + 1) * np];
                    for i in r0..r1 {
                        let dst_r = (i * self.stride + di) as isize - self.pad as isize;
                        if dst_r < lo as isize || dst_r >= hi as isize {
                            continue;
                        }
                        let dst = &mut plane[(dst_r as usize - lo) * self.w..(dst_r as usize - lo + 1) * self.w];
                        let src = &row[(i - r0) * self.ow..(i - r0 + 1) * self.ow];
                        for (j, &g) in src.iter().enumerate() {
                            let dst_c = (j * self.stride + dj) as isize - self.pad as isize;
                            if dst_c >= 0 && dst_c < self.w as isize {
                                dst[dst_c as usize] += g;
                            }
                        }
                    }
                }
            }
        }
        buf
    }
}

#[derive(Clone, Copy)]
struct SendPtr<S>(*mut S);
unsafe impl<S> Send for SendPtr<S> {}
unsafe impl<S> Sync for SendPtr<S> {}

/// `y[o, p] = sum_q K[o, q] * cols[q, p]` without bias.
fn correlate<S: Scalar>(x: &[S], kernel: &[S], plan: &Plan) -> Vec<S> {
    let ohw = plan.out_pixels();
    let kdim = plan.patch();
    let mut y = vec![S::zero(); plan.cout * ohw];
    let out = SendPtr(y.as_mut_ptr());
    plan.bands().into_par_iter().for_each(|(r0, r1)| {
        let out = out;
        let cols = plan.im2col(x, r0, r1);
        let np = (r1 - r0) * plan.ow;
        // SAFETY: each band writes only pixel columns [r0*ow, r1*ow) of
        // every output channel, which are disjoint across bands.
        unsafe {
            S::gemm(
                np,
                kdim,
                plan.cout,
                S::one(),
                cols.as_ptr(),
                1,
                np as isize,
                kernel.as_ptr(),
                1,
                kdim as isize,
                S::zero(),
                out.0.add(r0 * plan.ow),
                1,
                ohw as isize,
            );
        }
    });
    y
}

/// Gradient with respect to the correlation input (the adjoint map).
fn correlate_adjoint<S: Scalar>(grad_y: &[S], kernel: &[S], plan: &Plan) -> Vec<S> {
    let ohw = plan.out_pixels();
    let kdim = plan.patch();
    let bands = plan.bands();
    let partials: Vec<(usize, usize, Vec<S>)> = bands
        .par_iter()
        .map(|&(r0, r1)| {
            let np = (r1 - r0) * plan.ow;
            let mut gcols = vec![S::zero(); kdim * np];
            // SAFETY: operands are sized for the given strides; gcols is local.
            unsafe {
                S::gemm(
                    np,
                    plan.cout,
                    kdim,
                    S::one(),
                    grad_y.as_ptr().add(r0 * plan.ow),
                    1,
                    ohw as isize,
                    kernel.as_ptr(),
                    kdim as isize,
                    1,
                    S::zero(),
                    gcols.as_mut_ptr(),
                    1,
                    np as isize,
                );
            }
            let (lo, hi) = plan.input_rows(r0, r1);
            (lo, hi, plan.col2im(&gcols, r0, r1, lo, hi))
        })
        .collect();
    let hw = plan.h * plan.w;
    let mut gx = vec![S::zero(); plan.cin * hw];
    for (lo, hi, buf) in partials {
        let rows = hi - lo;
        for c in 0..plan.cin {
            let dst = &mut gx[c * hw + lo * plan.w..c * hw + hi * plan.w];
            let src = &buf[c * rows * plan.w..(c + 1) * rows * plan.w];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    gx
}

/// Gradient with respect to the kernel: `gK[o, q] = sum_p gy[o, p] * cols[q, p]`.
fn correlate_kernel_grad<S: Scalar>(x: &[S], grad_y: &[S], plan: &Plan) -> Vec<S> {
    let ohw = plan.out_pixels();
    let kdim = plan.patch();
    let partials: Vec<Vec<S>> = plan
        .bands()
        .into_par_iter()
        .map(|(r0, r1)| {
            let np = (r1 - r0) * plan.ow;
            let cols = plan.im2col(x, r0, r1);
            let mut part = vec![S::zero(); plan.cout * kdim];
            // SAFETY: operands are sized for the given strides; part is local.
            unsafe {
                S::gemm(
                    plan.cout,
                    np,
                    kdim,
                    S::one(),
                    grad_y.as_ptr().add(r0 * plan.ow),
                    ohw as isize,
                    1,
                    cols.as_ptr(),
                    1,
                    np as isize,
                    S::zero(),
                    part.as_mut_ptr(),
                    kdim as isize,
                    1,
                );
            }
            part
        })
        .collect();
    let mut gk = vec![S::zero(); plan.cout * kdim];
    for part in partials {
        for (g, p) in gk.iter_mut().zip(part) {
            *g += p;
        }
    }
    gk
}

fn add_bias<S: Scalar>(y: &mut Tensor<S>, bias: &Tensor<S>) {
    let c = y.shape()[0];
    for o in 0..c {
        let b = bias.data()[o];
        if b != S::zero() {
            y.plane_mut(o).iter_mut().for_each(|v| *v += b);
        }
    }
}

fn channel_sums<S: Scalar>(t: &Tensor<S>) -> Tensor<S> {
    let c = t.shape()[0];
    let sums = (0..c).map(|o| t.plane(o).iter().copied().sum()).collect();
    Tensor::from_vec(&[c], sums).expect("non-empty")
}

fn check_bias<S: Scalar>(bias: &Tensor<S>, n: usize) -> Result<()> {
    if bias.shape() != [n] {
        return Err(Error::shape(format!(
            "bias shape {:?}, expected [{n}]",
            bias.shape()
        )));
    }
    Ok(())
}

/// `Y[o,i,j] = sum_{k,di,dj} X[k, i*s+di-pad, j*s+dj-pad] * K[o,k,di,dj] + b[o]`,
/// reading zeros outside the input.
pub fn conv2d_forward<S: Scalar>(x: &Tensor<S>, kernel: &Tensor<S>, bias: &Tensor<S>, geom: ConvGeom) -> Result<Tensor<S>> {
    let plan = Plan::new(x.chw()?, kernel_dims(kernel)?, geom)?;
    check_bias(bias, plan.cout)?;
    let y = correlate(x.data(), kernel.data(), &plan);
    let mut y = Tensor::from_vec(&[plan.cout, plan.oh, plan.ow], y)?;
    add_bias(&mut y, bias);
    Ok(y)
}

/// Exact adjoint of [`conv2d_forward`] with respect to input, kernel and bias.
pub fn conv2d_backward<S: Scalar>(x: &Tensor<S>, kernel: &Tensor<S>, geom: ConvGeom, grad_out: &Tensor<S>) -> Result<ConvGrads<S>> {
    let plan = Plan::new(x.chw()?, kernel_dims(kernel)?, geom)?;
    if grad_out.shape() != [plan.cout, plan.oh, plan.ow] {
        return Err(Error::shape(format!(
            "gradient shape {:?} does not match conv output [{}, {}, {}]",
            grad_out.shape(),
            plan.cout,
            plan.oh,
            plan.ow
        )));
    }
    let gx = correlate_adjoint(grad_out.data(), kernel.data(), &plan);
    let gk = correlate_kernel_grad(x.data(), grad_out.data(), &plan);
    Ok(ConvGrads {
        input: Tensor::from_vec(x.shape(), gx)?,
        kernel: Tensor::from_vec(kernel.shape(), gk)?,
        bias: channel_sums(grad_out),
    })
}

/// Plan of the cross-correlation whose adjoint is the transposed convolution
/// of `x` (`ca x h x w`) with kernel `ca x cb x kh x kw`.
fn transposed_plan<S: Scalar>(x: &Tensor<S>, kernel: &Tensor<S>, geom: ConvGeom) -> Result<Plan> {
    let (ca, h, w) = x.chw()?;
    let (ka, cb, kh, kw) = kernel_dims(kernel)?;
    if ka != ca {
        return Err(Error::shape(format!(
            "input has {ca} channels, transposed kernel expects {ka}"
        )));
    }
    let oh = transposed_output_extent(h, kh, geom.stride, geom.padding)?;
    let ow = transposed_output_extent(w, kw, geom.stride, geom.padding)?;
    let plan = Plan::new((cb, oh, ow), (ka, cb, kh, kw), geom)?;
    debug_assert_eq!((plan.oh, plan.ow), (h, w));
    Ok(plan)
}

/// Transposed convolution, defined as the adjoint of [`conv2d_forward`] with
/// the same kernel. The kernel is `in x out x kh x kw` from this layer's point
/// of view; the bias has one entry per output channel (`kernel.shape()[1]`).
pub fn transposed_conv2d_forward<S: Scalar>(x: &Tensor<S>, kernel: &Tensor<S>, bias: &Tensor<S>, geom: ConvGeom) -> Result<Tensor<S>> {
    let plan = transposed_plan(x, kernel, geom)?;
    check_bias(bias, plan.cin)?;
    let y = correlate_adjoint(x.data(), kernel.data(), &plan);
    let mut y = Tensor::from_vec(&[plan.cin, plan.h, plan.w], y)?;
    add_bias(&mut y, bias);
    Ok(y)
}

pub fn transposed_conv2d_backward<S: Scalar>(x: &Tensor<S>, kernel: &Tensor<S>, geom: ConvGeom, grad_out: &Tensor<S>) -> Result<ConvGrads<S>> {
    let plan = transposed_plan(x, kernel, geom)?;
    if grad_out.shape() != [plan.cin, plan.h, plan.w] {
        return Err(Error::shape(format!(
            "gradient shape {:?} does not match transposed conv output [{}, {}, {}]",
            grad_out.shape(),
            plan.cin,
            plan.h,
            plan.w
        )));
    }
    let gx = correlate(grad_out.data(), kernel.data(), &plan);
    let gk = correlate_kernel_grad(grad_out.data(), x.data(), &plan);
    Ok(ConvGrads {
        input: Tensor::from_vec(x.shape(), gx)?,
        kernel: Tensor::from_vec(kernel.shape(), gk)?,
        bias: channel_sums(grad_out),
    })
}
