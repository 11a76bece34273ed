use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::FeatureMap;

/// Elementwise sum of same-shape maps.
pub fn eltwise_add<T: Scalar>(inputs: &[&FeatureMap<T>]) -> Result<FeatureMap<T>> {
    let (first, rest) = inputs
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("eltwise_add of zero maps".into()))?;
    let mut out = (*first).clone();
    for m in rest {
        out.add_assign(m)
            .map_err(|_| Error::shape("eltwise_add", format!("{} vs {}", first.shape(), m.shape())))?;
    }
    Ok(out)
}

/// The sum's gradient fans out unchanged to each of the `k` inputs.
pub fn eltwise_add_backward<T: Scalar>(grad_out: &FeatureMap<T>, k: usize) -> Vec<FeatureMap<T>> {
    vec![grad_out.clone(); k]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn sums_and_fans_out() {
        let a = FeatureMap::from_fn(Shape::new(1, 2, 3, 3), |_, c, y, x| (c + y * x) as f64 - 2.0);
        let z = FeatureMap::zeros(a.shape());
        assert_eq!(eltwise_add(&[&a, &z]).unwrap(), a);
        let s = eltwise_add(&[&a, &a, &a]).unwrap();
        assert_eq!(s, a.map(|v| 3.0 * v));
        let g = eltwise_add_backward(&a, 3);
        assert!(g.iter().all(|gi| gi == &a));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = FeatureMap::<f32>::zeros(Shape::new(1, 1, 2, 2));
        let b = FeatureMap::<f32>::zeros(Shape::new(1, 1, 2, 3));
        assert!(eltwise_add(&[&a, &b]).is_err());
    }
}
