//! Fixed bilinear upsampling, implemented as a per-channel transposed
//! convolution with a non-learned bilinear kernel of size `2f − f mod 2`,
//! stride `f`, centre-cropped to exactly `f·h × f·w`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{FeatureMap, Shape};

pub const SUPPORTED_FACTORS: [usize; 3] = [2, 4, 8];

fn check_factor(factor: usize) -> Result<()> {
    if SUPPORTED_FACTORS.contains(&factor) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "unsupported upsampling factor {factor}; expected one of {SUPPORTED_FACTORS:?}"
        )))
    }
}

/// One-dimensional bilinear filter taps; the 2-D kernel is their outer product.
pub fn bilinear_kernel_1d(factor: usize) -> Vec<f64> {
    let size = 2 * factor - factor % 2;
    let f = factor as f64;
    let center = if size % 2 == 1 { f - 1.0 } else { f - 0.5 };
    (0..size).map(|i| 1.0 - (i as f64 - center).abs() / f).collect()
}

/// For every output coordinate, the `(input index, weight)` pairs that
/// contribute to it after cropping.
fn taps<T: Scalar>(in_len: usize, factor: usize) -> Vec<Vec<(usize, T)>> {
    let kernel = bilinear_kernel_1d(factor);
    let size = kernel.len();
    let offset = (size - factor) / 2;
    let out_len = in_len * factor;
    let mut taps = vec![Vec::new(); out_len];
    for j in 0..in_len {
        for (k, &wk) in kernel.iter().enumerate() {
            // Uncropped position j*f + k maps to cropped j*f + k - offset.
            let Some(pos) = (j * factor + k).checked_sub(offset) else {
                continue;
            };
            if pos < out_len && wk != 0.0 {
                taps[pos].push((j, T::of(wk)));
            }
        }
    }
    taps
}

pub fn upsample_bilinear<T: Scalar>(input: &FeatureMap<T>, factor: usize) -> Result<FeatureMap<T>> {
    check_factor(factor)?;
    let s = input.shape();
    let oshape = Shape::new(s.n, s.c, s.h * factor, s.w * factor);
    let tx = taps::<T>(s.w, factor);
    let ty = taps::<T>(s.h, factor);
    let mut out = FeatureMap::zeros(oshape);
    let mut rows = vec![T::zero(); s.h * oshape.w];
    for n in 0..s.n {
        for c in 0..s.c {
            let src = input.plane(n, c);
            for y in 0..s.h {
                let srow = &src[y * s.w..(y + 1) * s.w];
                let drow = &mut rows[y * oshape.w..(y + 1) * oshape.w];
                for (d, t) in drow.iter_mut().zip(&tx) {
                    *d = t.iter().map(|&(i, w)| w * srow[i]).sum();
                }
            }
            let dst = out.plane_mut(n, c);
            for (oy, t) in ty.iter().enumerate() {
                let drow = &mut dst[oy * oshape.w..(oy + 1) * oshape.w];
                for &(j, w) in t {
                    let srow = &rows[j * oshape.w..(j + 1) * oshape.w];
                    for (d, &v) in drow.iter_mut().zip(srow) {
                        *d += w * v;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`upsample_bilinear`]: maps an `f·h × f·w` gradient back to `h × w`.
pub fn upsample_bilinear_backward<T: Scalar>(grad_out: &FeatureMap<T>, factor: usize) -> Result<FeatureMap<T>> {
    check_factor(factor)?;
    let g = grad_out.shape();
    if !g.h.is_multiple_of(factor) || !g.w.is_multiple_of(factor) {
        return Err(Error::shape(
            "upsample_bilinear_backward",
            format!("gradient {g} is not a multiple of factor {factor}"),
        ));
    }
    let ishape = Shape::new(g.n, g.c, g.h / factor, g.w / factor);
    let tx = taps::<T>(ishape.w, factor);
    let ty = taps::<T>(ishape.h, factor);
    let mut grad_in = FeatureMap::zeros(ishape);
    let mut rows = vec![T::zero(); ishape.h * g.w];
    for n in 0..g.n {
        for c in 0..g.c {
            rows.iter_mut().for_each(|v| *v = T::zero());
            let src = grad_out.plane(n, c);
            for (oy, t) in ty.iter().enumerate() {
                let srow = &src[oy * g.w..(oy + 1) * g.w];
                for &(j, w) in t {
                    let drow = &mut rows[j * g.w..(j + 1) * g.w];
                    for (d, &v) in drow.iter_mut().zip(srow) {
                        *d += w * v;
                    }
                }
            }
            let dst = grad_in.plane_mut(n, c);
            for y in 0..ishape.h {
                let srow = &rows[y * g.w..(y + 1) * g.w];
                let drow = &mut dst[y * ishape.w..(y + 1) * ishape.w];
                for (t, &v) in tx.iter().zip(srow) {
                    for &(i, w) in t {
                        drow[i] += w * v;
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

    #[test]
    fn kernel_taps() {
        assert_eq!(bilinear_kernel_1d(2), vec![0.25, 0.75, 0.75, 0.25]);
        let k4 = bilinear_kernel_1d(4);
        assert_eq!(k4.len(), 8);
        assert_eq!(k4, vec![0.125, 0.375, 0.625, 0.875, 0.875, 0.625, 0.375, 0.125]);
    }

    #[test]
    fn kernel_columns_partition_unity() {
        // Every residue class mod f sums to one, so interior outputs of a
        // constant map stay constant.
        for f in SUPPORTED_FACTORS {
            let k = bilinear_kernel_1d(f);
            for r in 0..f {
                let s: f64 = k.iter().skip(r).step_by(f).sum();
                assert!((s - 1.0).abs() < 1e-15, "f={f} r={r} sum={s}");
            }
        }
    }

    #[test]
    fn constant_map_stays_constant_in_interior() {
        for f in SUPPORTED_FACTORS {
            let x = FeatureMap::filled(Shape::new(1, 2, 5, 6), 0.3f64);
            let y = upsample_bilinear(&x, f).unwrap();
            assert_eq!(y.shape(), Shape::new(1, 2, 5 * f, 6 * f));
            for c in 0..2 {
                for oy in f..4 * f {
                    for ox in f..5 * f {
                        assert!((y.at(0, c, oy, ox) - 0.3).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn impulse_gives_tent() {
        let mut x = FeatureMap::zeros(Shape::new(1, 1, 4, 4));
        *x.at_mut(0, 0, 2, 1) = 1.0f64;
        let y = upsample_bilinear(&x, 2).unwrap();
        let k = [0.25, 0.75, 0.75, 0.25];
        for oy in 0..8 {
            for ox in 0..8 {
                let ky = oy as isize - 3;
                let kx = ox as isize - 1;
                let want = if (0..4).contains(&ky) && (0..4).contains(&kx) {
                    k[ky as usize] * k[kx as usize]
                } else {
                    0.0
                };
                assert_eq!(y.at(0, 0, oy, ox), want, "({oy},{ox})");
            }
        }
    }

    #[test]
    fn rejects_other_factors() {
        let x = FeatureMap::<f64>::zeros(Shape::new(1, 1, 2, 2));
        assert!(upsample_bilinear(&x, 3).is_err());
        assert!(upsample_bilinear(&x, 1).is_err());
    }
}
