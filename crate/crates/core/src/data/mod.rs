//! Samples, the synthetic corpus, splits and on-disk datasets.

pub mod dataset;
pub mod pgm;
pub mod rng;
pub mod synth;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, Mask};

pub use dataset::{load_dataset, load_split, write_dataset, Dataset, Manifest, Split};
pub use rng::SplitMix64;
pub use synth::{generate, generate_one, land_boundary, SynthConfig};

/// Train share of 305 train / 60 test images.
pub const DEFAULT_TRAIN_FRACTION: f64 = 305.0 / 365.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    /// Shape `(1, 1, h, w)`, values in `[0, 1]`.
    pub image: FeatureMap<f32>,
    /// One-pixel-wide centrelines.
    pub gt: Mask,
    /// Land region, when the image has one.
    pub land: Option<Mask>,
}

/// Seeded shuffle, then the first `round(n · train_fraction)` go to train.
/// Both halves keep the input order.
pub fn split(samples: Vec<Sample>, train_fraction: f64, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty sample list".into()));
    }
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_fraction} outside [0, 1]"
        )));
    }
    let n = samples.len();
    let n_train = (n as f64 * train_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::stream(seed, u64::MAX).shuffle(&mut order);
    let mut is_train = vec![false; n];
    for &i in &order[..n_train] {
        is_train[i] = true;
    }
    let (train, test): (Vec<_>, Vec<_>) = samples.into_iter().zip(is_train).partition(|(_, t)| *t);
    Ok((
        train.into_iter().map(|(s, _)| s).collect(),
        test.into_iter().map(|(s, _)| s).collect(),
    ))
}

/// Hex SHA-256 over every sample's id and PGM encodings, in order.
pub fn corpus_hash<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> String {
    let mut h = Sha256::new();
    for s in samples {
        h.update(s.id.as_bytes());
        h.update([0u8]);
        h.update(pgm::encode_image(&s.image));
        h.update(pgm::encode_mask(&s.gt));
        match &s.land {
            Some(l) => {
                h.update([1u8]);
                h.update(pgm::encode_mask(l));
            }
            None => h.update([0u8]),
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dummy(n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample {
                id: format!("{i:04}"),
                image: FeatureMap::from_plane(8, 8, vec![0.0; 64]).unwrap(),
                gt: Mask::new(8, 8),
                land: None,
            })
            .collect()
    }

    #[test]
    fn default_ratio_split() {
        let (train, test) = split(dummy(365), DEFAULT_TRAIN_FRACTION, 7).unwrap();
        assert_eq!((train.len(), test.len()), (305, 60));
        let (again, _) = split(dummy(365), DEFAULT_TRAIN_FRACTION, 7).unwrap();
        assert_eq!(train, again);
        let (other, _) = split(dummy(365), DEFAULT_TRAIN_FRACTION, 8).unwrap();
        assert_ne!(train, other);
    }

    #[test]
    fn split_edges() {
        let (train, test) = split(dummy(10), 1.0, 1).unwrap();
        assert_eq!((train.len(), test.len()), (10, 0));
        assert!(split(Vec::new(), 0.5, 1).is_err());
        assert!(split(dummy(3), 1.5, 1).is_err());
    }
}
