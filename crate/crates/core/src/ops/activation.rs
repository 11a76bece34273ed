//! Elementwise activations. Backward passes take the saved forward values.

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::FeatureMap;

pub fn relu<T: Scalar>(x: &FeatureMap<T>) -> FeatureMap<T> {
    x.map(|v| v.max(T::zero()))
}

/// Passes `grad_out` where the saved input was strictly positive.
pub fn relu_backward<T: Scalar>(grad_out: &FeatureMap<T>, saved_input: &FeatureMap<T>) -> Result<FeatureMap<T>> {
    grad_out.expect_shape("relu_backward", saved_input.shape())?;
    let mut g = grad_out.clone();
    for (gv, &x) in g.data_mut().iter_mut().zip(saved_input.data()) {
        if x <= T::zero() {
            *gv = T::zero();
        }
    }
    Ok(g)
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Scalar>(x: &FeatureMap<T>) -> FeatureMap<T> {
    x.map(sigmoid_scalar)
}

/// `grad_out · y · (1 − y)` with `y` the saved sigmoid output.
pub fn sigmoid_backward<T: Scalar>(grad_out: &FeatureMap<T>, saved_output: &FeatureMap<T>) -> Result<FeatureMap<T>> {
    grad_out.expect_shape("sigmoid_backward", saved_output.shape())?;
    let mut g = grad_out.clone();
    for (gv, &y) in g.data_mut().iter_mut().zip(saved_output.data()) {
        *gv *= y * (T::one() - y);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn sigmoid_at_zero_is_half() {
        assert_eq!(sigmoid_scalar(0.0f64), 0.5);
        assert_eq!(sigmoid_scalar(0.0f32), 0.5);
    }

    #[test]
    fn sigmoid_is_finite_at_extremes() {
        for x in [-1e4f64, -800.0, 800.0, 1e4] {
            let y = sigmoid_scalar(x);
            assert!(y.is_finite() && (0.0..=1.0).contains(&y));
        }
    }

    #[test]
    fn relu_values_and_gradient_mask() {
        let x = FeatureMap::from_plane(1, 3, vec![-3.0f64, 0.0, 3.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 3.0]);
        let g = FeatureMap::filled(Shape::new(1, 1, 1, 3), 2.0);
        assert_eq!(relu_backward(&g, &x).unwrap().data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn sigmoid_backward_matches_central_difference() {
        let xs: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.37).collect();
        let x = FeatureMap::from_plane(1, xs.len(), xs.clone()).unwrap();
        let y = sigmoid(&x);
        let ones = FeatureMap::filled(x.shape(), 1.0);
        let g = sigmoid_backward(&ones, &y).unwrap();
        let h = 1e-5;
        for (i, &xv) in xs.iter().enumerate() {
            let fd = (sigmoid_scalar(xv + h) - sigmoid_scalar(xv - h)) / (2.0 * h);
            let rel = (fd - g.data()[i]).abs() / fd.abs().max(1e-12);
            assert!(rel < 1e-8, "x={xv}: rel {rel}");
        }
    }
}
