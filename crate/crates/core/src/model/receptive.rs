//! Receptive field and cumulative stride of each backbone layer.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LayerKind {
    Conv3,
    Pool2,
}

const LAYERS: [(&str, LayerKind); 13] = [
    ("conv1_1", LayerKind::Conv3),
    ("conv1_2", LayerKind::Conv3),
    ("pool1", LayerKind::Pool2),
    ("conv2_1", LayerKind::Conv3),
    ("conv2_2", LayerKind::Conv3),
    ("pool2", LayerKind::Pool2),
    ("conv3_1", LayerKind::Conv3),
    ("conv3_2", LayerKind::Conv3),
    ("conv3_3", LayerKind::Conv3),
    ("pool3", LayerKind::Pool2),
    ("conv4_1", LayerKind::Conv3),
    ("conv4_2", LayerKind::Conv3),
    ("conv4_3", LayerKind::Conv3),
];

/// One row of the receptive-field table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceptiveField {
    pub layer: &'static str,
    pub rf_size: usize,
    pub stride: usize,
}

/// Applies `rf ← rf + (k − 1)·stride`, `stride ← stride·s` through the
/// backbone, starting from a single input pixel.
pub fn receptive_field_table() -> Vec<ReceptiveField> {
    let mut rf = 1;
    let mut stride = 1;
    LAYERS
        .iter()
        .map(|&(layer, kind)| {
            let (k, s) = match kind {
                LayerKind::Conv3 => (3, 1),
                LayerKind::Pool2 => (2, 2),
            };
            rf += (k - 1) * stride;
            stride *= s;
            ReceptiveField {
                layer,
                rf_size: rf,
                stride,
            }
        })
        .collect()
}

/// `(rf_size, cumulative_stride)` for a named layer.
pub fn receptive_field(layer: &str) -> Result<(usize, usize)> {
    receptive_field_table()
        .into_iter()
        .find(|r| r.layer == layer)
        .map(|r| (r.rf_size, r.stride))
        .ok_or_else(|| Error::UnknownLayer(layer.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_layers() {
        assert_eq!(receptive_field("conv1_1").unwrap(), (3, 1));
        assert_eq!(receptive_field("conv2_2").unwrap(), (14, 2));
        assert_eq!(receptive_field("pool3").unwrap(), (44, 8));
        assert_eq!(receptive_field("conv4_3").unwrap(), (92, 8));
    }

    #[test]
    fn unknown_layer() {
        assert!(matches!(receptive_field("conv5_1"), Err(Error::UnknownLayer(_))));
    }
}
