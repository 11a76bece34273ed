//! 2-D convolution (cross-correlation) with zero padding, and its exact
//! backward pass.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{FeatureMap, Shape};

/// Learnable convolution weights `[out, in, kh, kw]`, bias `[out]`, and
/// gradient buffers of identical shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel<T> {
    out_channels: usize,
    in_channels: usize,
    kh: usize,
    kw: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub grad_weight: Vec<T>,
    pub grad_bias: Vec<T>,
}

impl<T: Scalar> ConvKernel<T> {
    /// Zero-initialised square kernel; `k` must be 1 or 3.
    pub fn zeros(out_channels: usize, in_channels: usize, k: usize) -> Result<Self> {
        if k != 1 && k != 3 {
            return Err(Error::InvalidArgument(format!("kernel size must be 1 or 3, got {k}")));
        }
        if out_channels == 0 || in_channels == 0 {
            return Err(Error::InvalidArgument("kernel channel counts must be positive".into()));
        }
        let wlen = out_channels * in_channels * k * k;
        Ok(ConvKernel {
            out_channels,
            in_channels,
            kh: k,
            kw: k,
            weight: vec![T::zero(); wlen],
            bias: vec![T::zero(); out_channels],
            grad_weight: vec![T::zero(); wlen],
            grad_bias: vec![T::zero(); out_channels],
        })
    }

    pub fn from_parts(out_channels: usize, in_channels: usize, k: usize, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        let mut kernel = Self::zeros(out_channels, in_channels, k)?;
        if weight.len() != kernel.weight.len() || bias.len() != out_channels {
            return Err(Error::shape(
                "ConvKernel::from_parts",
                format!(
                    "expected {} weights and {} biases, got {} and {}",
                    kernel.weight.len(),
                    out_channels,
                    weight.len(),
                    bias.len()
                ),
            ));
        }
        kernel.weight = weight;
        kernel.bias = bias;
        Ok(kernel)
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kh, self.kw)
    }

    /// Padding that keeps the spatial size for stride 1.
    pub fn same_padding(&self) -> usize {
        self.kh / 2
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    #[inline]
    pub fn w(&self, o: usize, i: usize, ky: usize, kx: usize) -> T {
        self.weight[((o * self.in_channels + i) * self.kh + ky) * self.kw + kx]
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.iter_mut().for_each(|g| *g = T::zero());
        self.grad_bias.iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn cast<U: Scalar>(&self) -> ConvKernel<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::of(x.as_f64())).collect::<Vec<U>>();
        ConvKernel {
            out_channels: self.out_channels,
            in_channels: self.in_channels,
            kh: self.kh,
            kw: self.kw,
            weight: c(&self.weight),
            bias: c(&self.bias),
            grad_weight: c(&self.grad_weight),
            grad_bias: c(&self.grad_bias),
        }
    }
}

fn out_extent(len: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = len + 2 * padding;
    if stride == 0 || padded < k {
        None
    } else {
        Some((padded - k) / stride + 1)
    }
}

fn output_shape<T: Scalar>(
    op: &'static str,
    input: Shape,
    kernel: &ConvKernel<T>,
    stride: usize,
    padding: usize,
) -> Result<Shape> {
    if input.c != kernel.in_channels {
        return Err(Error::shape(
            op,
            format!(
                "input {input} has {} channels, kernel expects {}",
                input.c, kernel.in_channels
            ),
        ));
    }
    let oh = out_extent(input.h, kernel.kh, stride, padding);
    let ow = out_extent(input.w, kernel.kw, stride, padding);
    match (oh, ow) {
        (Some(oh), Some(ow)) => Ok(Shape::new(input.n, kernel.out_channels, oh, ow)),
        _ => Err(Error::shape(
            op,
            format!(
                "{}x{} kernel, stride {stride}, padding {padding} does not fit input {input}",
                kernel.kh, kernel.kw
            ),
        )),
    }
}

/// Valid output-column range `[lo, hi)` for tap `k` at stride 1, together
/// with the matching input start column.
#[inline]
fn tap_range(out_len: usize, in_len: usize, k: usize, padding: usize) -> (usize, usize) {
    let lo = padding.saturating_sub(k);
    let hi = (in_len + padding).saturating_sub(k).min(out_len);
    (lo, hi.max(lo))
}

#[inline]
fn axpy<T: Scalar>(dst: &mut [T], a: T, src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// `out[n,o,y,x] = bias[o] + Σ in[n,i,y·s+dy−p, x·s+dx−p] · w[o,i,dy,dx]`,
/// reading zeros outside the input.
pub fn conv2d<T: Scalar>(
    input: &FeatureMap<T>,
    kernel: &ConvKernel<T>,
    stride: usize,
    padding: usize,
) -> Result<FeatureMap<T>> {
    let ishape = input.shape();
    let oshape = output_shape("conv2d", ishape, kernel, stride, padding)?;
    let mut out = FeatureMap::zeros(oshape);
    let (kh, kw) = (kernel.kh, kernel.kw);

    for n in 0..ishape.n {
        for o in 0..kernel.out_channels {
            let mut acc = vec![kernel.bias[o]; oshape.plane()];
            for i in 0..kernel.in_channels {
                let src = input.plane(n, i);
                if stride == 1 && kh == 1 && kw == 1 && padding == 0 {
                    axpy(&mut acc, kernel.w(o, i, 0, 0), src);
                    continue;
                }
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = kernel.w(o, i, ky, kx);
                        if wv == T::zero() {
                            continue;
                        }
                        if stride == 1 {
                            let (ylo, yhi) = tap_range(oshape.h, ishape.h, ky, padding);
                            let (xlo, xhi) = tap_range(oshape.w, ishape.w, kx, padding);
                            for oy in ylo..yhi {
                                let iy = oy + ky - padding;
                                let ix0 = xlo + kx - padding;
                                let srow = &src[iy * ishape.w + ix0..iy * ishape.w + ix0 + (xhi - xlo)];
                                let drow = &mut acc[oy * oshape.w + xlo..oy * oshape.w + xhi];
                                axpy(drow, wv, srow);
                            }
                        } else {
                            for oy in 0..oshape.h {
                                let Some(iy) = (oy * stride + ky).checked_sub(padding) else {
                                    continue;
                                };
                                if iy >= ishape.h {
                                    continue;
                                }
                                for ox in 0..oshape.w {
                                    let Some(ix) = (ox * stride + kx).checked_sub(padding) else {
                                        continue;
                                    };
                                    if ix < ishape.w {
                                        acc[oy * oshape.w + ox] += wv * src[iy * ishape.w + ix];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            out.plane_mut(n, o).copy_from_slice(&acc);
        }
    }
    Ok(out)
}

/// Exact adjoint of [`conv2d`]. Returns the input gradient and accumulates
/// (`+=`) weight and bias gradients into `kernel`.
pub fn conv2d_backward<T: Scalar>(
    grad_out: &FeatureMap<T>,
    saved_input: &FeatureMap<T>,
    kernel: &mut ConvKernel<T>,
    stride: usize,
    padding: usize,
) -> Result<FeatureMap<T>> {
    let ishape = saved_input.shape();
    let oshape = output_shape("conv2d_backward", ishape, kernel, stride, padding)?;
    grad_out.expect_shape("conv2d_backward", oshape)?;
    let mut grad_in = FeatureMap::zeros(ishape);
    let (kh, kw) = (kernel.kh, kernel.kw);
    let cin = kernel.in_channels;

    for n in 0..ishape.n {
        for o in 0..kernel.out_channels {
            let g = grad_out.plane(n, o);
            kernel.grad_bias[o] += g.iter().copied().sum::<T>();
            for i in 0..cin {
                let src = saved_input.plane(n, i);
                let widx = |ky: usize, kx: usize| ((o * cin + i) * kh + ky) * kw + kx;
                if stride == 1 && kh == 1 && kw == 1 && padding == 0 {
                    let wi = widx(0, 0);
                    kernel.grad_weight[wi] += dot(g, src);
                    let wv = kernel.weight[wi];
                    axpy(grad_in.plane_mut(n, i), wv, g);
                    continue;
                }
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wi = widx(ky, kx);
                        let wv = kernel.weight[wi];
                        let mut gw = T::zero();
                        if stride == 1 {
                            let (ylo, yhi) = tap_range(oshape.h, ishape.h, ky, padding);
                            let (xlo, xhi) = tap_range(oshape.w, ishape.w, kx, padding);
                            let dst = grad_in.plane_mut(n, i);
                            for oy in ylo..yhi {
                                let iy = oy + ky - padding;
                                let ix0 = xlo + kx - padding;
                                let span = xhi - xlo;
                                let grow = &g[oy * oshape.w + xlo..oy * oshape.w + xhi];
                                let srow = &src[iy * ishape.w + ix0..iy * ishape.w + ix0 + span];
                                gw += dot(grow, srow);
                                axpy(&mut dst[iy * ishape.w + ix0..iy * ishape.w + ix0 + span], wv, grow);
                            }
                        } else {
                            let dst = grad_in.plane_mut(n, i);
                            for oy in 0..oshape.h {
                                let Some(iy) = (oy * stride + ky).checked_sub(padding) else {
                                    continue;
                                };
                                if iy >= ishape.h {
                                    continue;
                                }
                                for ox in 0..oshape.w {
                                    let Some(ix) = (ox * stride + kx).checked_sub(padding) else {
                                        continue;
                                    };
                                    if ix < ishape.w {
                                        let gv = g[oy * oshape.w + ox];
                                        gw += gv * src[iy * ishape.w + ix];
                                        dst[iy * ishape.w + ix] += wv * gv;
                                    }
                                }
                            }
                        }
                        kernel.grad_weight[wi] += gw;
                    }
                }
            }
        }
    }
    Ok(grad_in)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(h: usize, w: usize) -> FeatureMap<f64> {
        FeatureMap::filled(Shape::new(1, 1, h, w), 1.0)
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut k = ConvKernel::<f64>::zeros(1, 1, 3).unwrap();
        k.weight[4] = 1.0;
        let x = FeatureMap::from_plane(3, 3, (1..=9).map(f64::from).collect()).unwrap();
        assert_eq!(conv2d(&x, &k, 1, 1).unwrap(), x);
        assert_eq!(conv2d(&ones(3, 3), &k, 1, 1).unwrap(), ones(3, 3));
    }

    #[test]
    fn all_ones_kernel_counts_overlap() {
        let mut k = ConvKernel::<f64>::zeros(1, 1, 3).unwrap();
        k.weight.iter_mut().for_each(|w| *w = 1.0);
        let y = conv2d(&ones(3, 3), &k, 1, 1).unwrap();
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn zero_kernel_gives_bias() {
        let mut k = ConvKernel::<f64>::zeros(2, 1, 3).unwrap();
        k.bias = vec![0.5, -1.5];
        let x = FeatureMap::from_fn(Shape::new(1, 1, 4, 5), |_, _, y, x| (y * 7 + x) as f64);
        let y = conv2d(&x, &k, 1, 1).unwrap();
        assert!(y.plane(0, 0).iter().all(|&v| v == 0.5));
        assert!(y.plane(0, 1).iter().all(|&v| v == -1.5));
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let k = ConvKernel::<f32>::zeros(1, 2, 3).unwrap();
        let x = FeatureMap::<f32>::zeros(Shape::new(1, 3, 4, 4));
        assert!(matches!(conv2d(&x, &k, 1, 1), Err(Error::Shape { .. })));
    }

    #[test]
    fn bad_kernel_size_is_rejected() {
        assert!(ConvKernel::<f32>::zeros(1, 1, 5).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut k = ConvKernel::<f64>::zeros(2, 2, 3).unwrap();
        k.weight.iter_mut().enumerate().for_each(|(i, w)| *w = i as f64 * 0.1);
        let x = FeatureMap::from_fn(Shape::new(1, 2, 5, 5), |_, c, y, x| (c + y * x) as f64);
        let g = FeatureMap::zeros(Shape::new(1, 2, 5, 5));
        let gi = conv2d_backward(&g, &x, &mut k, 1, 1).unwrap();
        assert!(gi.data().iter().all(|&v| v == 0.0));
        assert!(k.grad_weight.iter().all(|&v| v == 0.0));
        assert!(k.grad_bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_wrong_grad_shape() {
        let mut k = ConvKernel::<f64>::zeros(2, 1, 3).unwrap();
        let x = FeatureMap::zeros(Shape::new(1, 1, 4, 4));
        let g = FeatureMap::zeros(Shape::new(1, 1, 4, 4));
        assert!(conv2d_backward(&g, &x, &mut k, 1, 1).is_err());
    }

    #[test]
    fn strided_conv_matches_definition() {
        let mut k = ConvKernel::<f64>::zeros(1, 1, 3).unwrap();
        k.weight = (0..9).map(|v| v as f64 - 4.0).collect();
        let x = FeatureMap::from_fn(Shape::new(1, 1, 6, 6), |_, _, y, x| ((y * 6 + x) % 5) as f64);
        let y = conv2d(&x, &k, 2, 1).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 3, 3));
        for oy in 0..3 {
            for ox in 0..3 {
                let mut s = 0.0;
                for ky in 0..3 {
                    for kx in 0..3 {
                        let iy = (oy * 2 + ky) as isize - 1;
                        let ix = (ox * 2 + kx) as isize - 1;
                        if (0..6).contains(&iy) && (0..6).contains(&ix) {
                            s += x.at(0, 0, iy as usize, ix as usize) * k.w(0, 0, ky, kx);
                        }
                    }
                }
                assert_eq!(y.at(0, 0, oy, ox), s);
            }
        }
    }
}
