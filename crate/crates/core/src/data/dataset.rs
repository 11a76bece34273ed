//! Dataset directories:
//!
//! ```text
//! root/manifest.json
//! root/{train,test}/images/NNNN.pgm
//! root/{train,test}/gt/NNNN.pgm
//! root/{train,test}/land/NNNN.pgm   (only for images with land)
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{corpus_hash, generate, pgm, split, Sample, SynthConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidArgument(format!("unknown split `{s}` (train|test)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub synth: SynthConfig,
    pub train_fraction: f64,
    /// Hash of the whole corpus in generation order, see [`corpus_hash`].
    pub corpus_sha256: String,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    /// Generates the corpus and splits it with the corpus seed.
    pub fn synthesize(config: &SynthConfig, train_fraction: f64) -> Result<Self> {
        let samples = generate(config)?;
        let hash = corpus_hash(&samples);
        let (train, test) = split(samples, train_fraction, config.seed)?;
        let ids = |v: &[Sample]| v.iter().map(|s| s.id.clone()).collect();
        Ok(Dataset {
            manifest: Manifest {
                synth: config.clone(),
                train_fraction,
                corpus_sha256: hash,
                train: ids(&train),
                test: ids(&test),
            },
            train,
            test,
        })
    }

    pub fn split(&self, which: Split) -> &[Sample] {
        match which {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn is_nonempty_dir(path: &Path) -> Result<bool> {
    match std::fs::read_dir(path) {
        Ok(mut it) => Ok(it.next().is_some()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(false),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Writes `dataset` under `root`. A non-empty `root` is refused unless
/// `force` is set, in which case previous splits and manifest are removed.
pub fn write_dataset(root: &Path, dataset: &Dataset, force: bool) -> Result<()> {
    if is_nonempty_dir(root)? {
        if !force {
            return Err(Error::InvalidArgument(format!(
                "output directory {} is not empty (use --force to overwrite)",
                root.display()
            )));
        }
        for which in [Split::Train, Split::Test] {
            let dir = root.join(which.dir_name());
            if dir.exists() {
                std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            }
        }
    }
    for which in [Split::Train, Split::Test] {
        let base = root.join(which.dir_name());
        mkdir(&base.join("images"))?;
        mkdir(&base.join("gt"))?;
        for s in dataset.split(which) {
            let name = format!("{}.pgm", s.id);
            pgm::save_image(&base.join("images").join(&name), &s.image)?;
            pgm::save_mask(&base.join("gt").join(&name), &s.gt)?;
            if let Some(land) = &s.land {
                mkdir(&base.join("land"))?;
                pgm::save_mask(&base.join("land").join(&name), land)?;
            }
        }
    }
    let path = root.join("manifest.json");
    let json = serde_json::to_string_pretty(&dataset.manifest)?;
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

pub fn load_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads every `images/*.pgm` of a split with its ground truth, sorted by id.
/// Works without a manifest.
pub fn load_split(root: &Path, which: Split) -> Result<Vec<Sample>> {
    let base = root.join(which.dir_name());
    let images = base.join("images");
    let mut names: Vec<PathBuf> = std::fs::read_dir(&images)
        .map_err(|e| Error::io(&images, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(&images, err)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|path| {
            let file = path.file_name().expect("read_dir entries have names");
            let id = path.file_stem().expect("has stem").to_string_lossy().into_owned();
            let image = pgm::load_image(&path)?;
            let gt = pgm::load_mask(&base.join("gt").join(file))?;
            let land_path = base.join("land").join(file);
            let land = if land_path.exists() {
                Some(pgm::load_mask(&land_path)?)
            } else {
                None
            };
            let s = image.shape();
            if gt.dims() != (s.h, s.w) {
                return Err(Error::shape(
                    "load_split",
                    format!("{id}: image {}x{} but gt {}x{}", s.h, s.w, gt.height(), gt.width()),
                ));
            }
            Ok(Sample { id, image, gt, land })
        })
        .collect()
}

pub fn load_dataset(root: &Path) -> Result<Dataset> {
    Ok(Dataset {
        manifest: load_manifest(root)?,
        train: load_split(root, Split::Train)?,
        test: load_split(root, Split::Test)?,
    })
}
