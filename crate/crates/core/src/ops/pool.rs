//! 2×2 stride-2 max pooling.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{FeatureMap, Shape};

/// Pooled map plus, for every output element, the flat index of the input
/// element that won. Ties go to the first element in row-major window order.
pub fn maxpool2<T: Scalar>(input: &FeatureMap<T>) -> Result<(FeatureMap<T>, Vec<usize>)> {
    let s = input.shape();
    if !s.h.is_multiple_of(2) || !s.w.is_multiple_of(2) {
        return Err(Error::shape(
            "maxpool2",
            format!("height and width must be even, got {s}"),
        ));
    }
    let oshape = Shape::new(s.n, s.c, s.h / 2, s.w / 2);
    let mut out = Vec::with_capacity(oshape.len());
    let mut argmax = Vec::with_capacity(oshape.len());
    let data = input.data();
    for n in 0..s.n {
        for c in 0..s.c {
            let base = (n * s.c + c) * s.plane();
            for oy in 0..oshape.h {
                for ox in 0..oshape.w {
                    let mut best = base + 2 * oy * s.w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * s.w + 2 * ox + dx;
                        if data[idx] > data[best] {
                            best = idx;
                        }
                    }
                    out.push(data[best]);
                    argmax.push(best);
                }
            }
        }
    }
    Ok((FeatureMap::from_vec(oshape, out)?, argmax))
}

/// Routes each output gradient to its recorded argmax position.
pub fn maxpool2_backward<T: Scalar>(
    grad_out: &FeatureMap<T>,
    argmax: &[usize],
    input_shape: Shape,
) -> Result<FeatureMap<T>> {
    let want = Shape::new(input_shape.n, input_shape.c, input_shape.h / 2, input_shape.w / 2);
    grad_out.expect_shape("maxpool2_backward", want)?;
    if argmax.len() != want.len() {
        return Err(Error::shape(
            "maxpool2_backward",
            format!("{} argmax entries for {} outputs", argmax.len(), want.len()),
        ));
    }
    let mut g = FeatureMap::zeros(input_shape);
    let gd = g.data_mut();
    for (&idx, &v) in argmax.iter().zip(grad_out.data()) {
        gd[idx] += v;
    }
    Ok(g)
}
