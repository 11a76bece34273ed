//! Line-oriented `key = value` config files. Blank lines and lines starting
//! with `#` are ignored. Each command's settings print back in the same
//! format, so a printed resolved config can be fed to `--config`.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use wein::data::{SynthConfig, DEFAULT_TRAIN_FRACTION};
use wein::losses::StarLoss;
use wein::model::NetworkConfig;
use wein::trainer::TrainConfig;

pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value, got `{line}`", n + 1))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(format!("line {}: empty key", n + 1));
        }
        if out.iter().any(|(seen, _)| seen == k) {
            return Err(format!("line {}: duplicate key `{k}`", n + 1));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

pub fn read_kv(path: &Path) -> Result<Vec<(String, String)>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_kv(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("{key}: cannot parse `{v}`"))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

fn pair<T: FromStr + Copy>(key: &str, v: &str, sep: char) -> Result<(T, T), String> {
    let (a, b) = v
        .split_once(sep)
        .ok_or_else(|| format!("{key}: expected two values separated by `{sep}`, got `{v}`"))?;
    Ok((num(key, a.trim())?, num(key, b.trim())?))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn bool_value(key: &str, v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("{key}: expected true or false, got `{v}`")),
    }
}

pub trait Settings {
    fn set(&mut self, key: &str, value: &str) -> Result<(), String>;
    fn entries(&self) -> Vec<(&'static str, String)>;

    fn apply(&mut self, kv: &[(String, String)]) -> Result<(), String> {
        kv.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            writeln!(s, "{k}={v}").unwrap();
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    pub synth: SynthConfig,
    pub train_fraction: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            synth: SynthConfig::default(),
            train_fraction: DEFAULT_TRAIN_FRACTION,
        }
    }
}

impl Settings for SynthSettings {
    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let c = &mut self.synth;
        match key {
            "seed" => c.seed = num(key, v)?,
            "count" => c.count = num(key, v)?,
            "size" => c.size = pair(key, v, 'x')?,
            "fronts_per_image" => c.fronts_per_image = pair(key, v, ',')?,
            "ridge_width" => c.ridge_width = num(key, v)?,
            "ridge_peak" => c.ridge_peak = pair(key, v, ',')?,
            "noise_amplitude" => c.noise_amplitude = num(key, v)?,
            "land_fraction" => c.land_fraction = num(key, v)?,
            "ocean_level" => c.ocean_level = num(key, v)?,
            "train_fraction" => self.train_fraction = num(key, v)?,
            _ => return Err(format!("unknown synth setting `{key}`")),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let c = &self.synth;
        vec![
            ("seed", c.seed.to_string()),
            ("count", c.count.to_string()),
            ("size", format!("{}x{}", c.size.0, c.size.1)),
            (
                "fronts_per_image",
                format!("{},{}", c.fronts_per_image.0, c.fronts_per_image.1),
            ),
            ("ridge_width", c.ridge_width.to_string()),
            ("ridge_peak", format!("{},{}", c.ridge_peak.0, c.ridge_peak.1)),
            ("noise_amplitude", c.noise_amplitude.to_string()),
            ("land_fraction", c.land_fraction.to_string()),
            ("ocean_level", c.ocean_level.to_string()),
            ("train_fraction", self.train_fraction.to_string()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainSettings {
    pub train: TrainConfig,
    pub net: NetworkConfig,
}

impl Settings for TrainSettings {
    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let t = &mut self.train;
        match key {
            "lr" => t.lr = num(key, v)?,
            "momentum" => t.momentum = num(key, v)?,
            "weight_decay" => t.weight_decay = num(key, v)?,
            "lr_gamma" => t.lr_gamma = num(key, v)?,
            "lr_step_epochs" => t.lr_step_epochs = list(key, v)?,
            "epochs" => t.epochs = num(key, v)?,
            "batch" => t.batch = num(key, v)?,
            "seed" => t.seed = num(key, v)?,
            "checkpoint_every" => t.checkpoint_every = num(key, v)?,
            "r" => t.loss.r = num(key, v)?,
            "use_iou" => t.loss.use_iou = bool_value(key, v)?,
            "star" => t.loss.star = StarLoss::from_str(v).map_err(|e| e.to_string())?,
            "epsilon" => t.loss.epsilon = num(key, v)?,
            "stage_widths" => {
                let w: Vec<usize> = list(key, v)?;
                self.net.stage_widths = w
                    .try_into()
                    .map_err(|_| format!("{key}: expected four comma-separated widths"))?;
            }
            "side_depth" => self.net.side_depth = num(key, v)?,
            _ => return Err(format!("unknown train setting `{key}`")),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        vec![
            ("lr", t.lr.to_string()),
            ("momentum", t.momentum.to_string()),
            ("weight_decay", t.weight_decay.to_string()),
            ("lr_gamma", t.lr_gamma.to_string()),
            ("lr_step_epochs", join(&t.lr_step_epochs)),
            ("epochs", t.epochs.to_string()),
            ("batch", t.batch.to_string()),
            ("seed", t.seed.to_string()),
            ("checkpoint_every", t.checkpoint_every.to_string()),
            ("r", t.loss.r.to_string()),
            ("use_iou", t.loss.use_iou.to_string()),
            ("star", t.loss.star.to_string()),
            ("epsilon", t.loss.epsilon.to_string()),
            ("stage_widths", join(&self.net.stage_widths)),
            ("side_depth", self.net.side_depth.to_string()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let kv = parse_kv("# header\n\nlr = 0.01\n  epochs=3  \n").unwrap();
        assert_eq!(kv, vec![("lr".into(), "0.01".into()), ("epochs".into(), "3".into())]);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_kv("lr 0.01").is_err());
        assert!(parse_kv("=3").is_err());
        assert!(parse_kv("a=1\na=2").is_err());
    }

    #[test]
    fn rendered_settings_round_trip() {
        let mut t = TrainSettings::default();
        t.apply(&parse_kv("lr=0.5\nlr_step_epochs=2,4\nstar=smooth_l1\nstage_widths=4,4,8,8\nuse_iou=false").unwrap())
            .unwrap();
        let mut back = TrainSettings::default();
        back.apply(&parse_kv(&t.render()).unwrap()).unwrap();
        assert_eq!(back, t);

        let mut s = SynthSettings::default();
        s.apply(&parse_kv("size=64x96\nridge_peak=0.5,0.6\ncount=3").unwrap())
            .unwrap();
        let mut back = SynthSettings::default();
        back.apply(&parse_kv(&s.render()).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(TrainSettings::default().set("learning_rate", "1").is_err());
        assert!(SynthSettings::default().set("colour", "red").is_err());
        assert!(TrainSettings::default().set("stage_widths", "1,2,3").is_err());
    }
}
