use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Backbone convolutions per stage.
pub const STAGE_CONV_COUNTS: [usize; 4] = [2, 2, 3, 3];
pub const NUM_STAGES: usize = 4;
/// Total backbone 3×3 convolutions (and therefore side branches).
pub const NUM_BACKBONE_CONVS: usize = 10;

/// Shape of the network. The stage structure is fixed; widths and side
/// depth are configurable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub stage_widths: [usize; 4],
    pub side_depth: usize,
    pub input_channels: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl NetworkConfig {
    /// Small widths that train on a CPU in minutes.
    pub const fn desk() -> Self {
        NetworkConfig {
            stage_widths: [8, 16, 32, 64],
            side_depth: 21,
            input_channels: 1,
        }
    }

    /// VGG16-style widths for the first four stages.
    pub const fn wide() -> Self {
        NetworkConfig {
            stage_widths: [64, 128, 256, 512],
            side_depth: 21,
            input_channels: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage_widths.contains(&0) {
            return Err(Error::Config(format!(
                "stage widths must be positive, got {:?}",
                self.stage_widths
            )));
        }
        if self.side_depth == 0 {
            return Err(Error::Config("side_depth must be at least 1".into()));
        }
        if self.input_channels == 0 {
            return Err(Error::Config("input_channels must be at least 1".into()));
        }
        Ok(())
    }

    /// `(stage, in_channels, out_channels)` of every backbone conv in order.
    pub fn backbone_layout(&self) -> Vec<(usize, usize, usize)> {
        let mut layout = Vec::with_capacity(NUM_BACKBONE_CONVS);
        let mut cin = self.input_channels;
        for (stage, (&count, &width)) in STAGE_CONV_COUNTS.iter().zip(&self.stage_widths).enumerate() {
            for _ in 0..count {
                layout.push((stage, cin, width));
                cin = width;
            }
        }
        layout
    }

    /// Learnable scalars: backbone 3×3 convs, side 1×1 convs, per-stage
    /// 1×1 collapse and the 1×1 fusion conv.
    pub fn param_count(&self) -> usize {
        let d = self.side_depth;
        let backbone: usize = self
            .backbone_layout()
            .iter()
            .map(|&(_, cin, cout)| cin * cout * 9 + cout)
            .sum();
        let side: usize = self.backbone_layout().iter().map(|&(_, _, cout)| cout * d + d).sum();
        let collapse = NUM_STAGES * (d + 1);
        let fusion = NUM_STAGES + 1;
        backbone + side + collapse + fusion
    }
}

/// Input sizes must survive three 2× poolings.
pub fn check_input_size(h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 || !h.is_multiple_of(8) || !w.is_multiple_of(8) {
        return Err(Error::InvalidArgument(format!(
            "input size {h}x{w} must be a positive multiple of 8"
        )));
    }
    Ok(())
}
