//! The four-stage deeply supervised network, its parameters, checkpoint
//! format and receptive-field table.

mod checkpoint;
mod config;
mod network;
mod params;
mod receptive;

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{check_input_size, NetworkConfig, NUM_BACKBONE_CONVS, NUM_STAGES, STAGE_CONV_COUNTS};
pub use network::{OutputGrads, SideOutputSet, Wein};
pub use params::{init_params, ModelParams};
pub use receptive::{receptive_field, receptive_field_table, ReceptiveField};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{FeatureMap, Shape};

    #[test]
    fn desk_param_count_matches_hand_count() {
        // backbone: 1·8·9+8, 8·8·9+8, 8·16·9+16, 16·16·9+16, 16·32·9+32,
        // 2×(32·32·9+32), 32·64·9+64, 2×(64·64·9+64)
        let backbone = 80 + 584 + 1168 + 2320 + 4640 + 2 * 9248 + 18496 + 2 * 36928;
        // side: per conv width·21+21
        let side = 2 * 189 + 2 * 357 + 3 * 693 + 3 * 1365;
        let collapse = 4 * 22;
        let fusion = 5;
        let total = backbone + side + collapse + fusion;
        assert_eq!(total, 126_999);
        let config = NetworkConfig::desk();
        assert_eq!(config.param_count(), total);
        assert_eq!(init_params::<f32>(&config, 0).unwrap().param_count(), total);
    }

    #[test]
    fn init_is_seeded_and_fusion_is_mean() {
        let c = NetworkConfig::desk();
        let a = init_params::<f32>(&c, 5).unwrap();
        let b = init_params::<f32>(&c, 5).unwrap();
        let d = init_params::<f32>(&c, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, d);
        assert_eq!(a.fusion.weight, vec![0.25; 4]);
        assert_eq!(a.fusion.bias, vec![0.0]);
        assert!(a.kernels().all(|k| k.bias.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn zero_weights_give_half_everywhere() {
        let c = NetworkConfig::desk();
        let mut net = Wein::<f32>::new(c, ModelParams::zeros(&c).unwrap()).unwrap();
        let img = FeatureMap::from_fn(Shape::new(1, 1, 32, 32), |_, _, y, x| ((x + y) % 7) as f32 / 7.0);
        let out = net.forward(&img).unwrap();
        for m in out.prob_maps() {
            assert!(m.data().iter().all(|&p| p == 0.5));
        }
    }

    #[test]
    fn outputs_have_input_resolution() {
        let mut net = Wein::<f32>::init(NetworkConfig::desk(), 1).unwrap();
        let img = FeatureMap::filled(Shape::new(1, 1, 128, 128), 0.3f32);
        let out = net.forward(&img).unwrap();
        let want = Shape::new(1, 1, 128, 128);
        for m in out.side_logits.iter().chain(&out.side_probs) {
            assert_eq!(m.shape(), want);
        }
        assert_eq!(out.fused_logit.shape(), want);
        assert_eq!(out.fused_prob.shape(), want);
        assert!(out
            .prob_maps()
            .iter()
            .all(|m| m.data().iter().all(|&p| p > 0.0 && p < 1.0)));
    }

    #[test]
    fn rejects_sizes_not_divisible_by_eight() {
        let mut net = Wein::<f32>::init(NetworkConfig::desk(), 1).unwrap();
        let img = FeatureMap::zeros(Shape::new(1, 1, 36, 32));
        assert!(net.forward(&img).is_err());
    }

    #[test]
    fn backward_before_forward_fails() {
        let mut net = Wein::<f32>::init(NetworkConfig::desk(), 1).unwrap();
        let z = FeatureMap::zeros(Shape::new(1, 1, 8, 8));
        let grads = OutputGrads {
            side: [z.clone(), z.clone(), z.clone(), z.clone()],
            fused: z,
        };
        assert!(matches!(net.backward(&grads), Err(crate::Error::NoForwardCache)));
    }

    #[test]
    fn param_mismatch_is_rejected() {
        let params = init_params::<f32>(&NetworkConfig::desk(), 0).unwrap();
        assert!(Wein::new(NetworkConfig::wide(), params).is_err());
    }
}
