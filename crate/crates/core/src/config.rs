//! Experiment configuration: a flat `key = value` text format with sections
//! named after the modules they configure. Unknown sections or keys are hard
//! errors. The resolved form (every default filled in) can be re-emitted.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{generate_gaussian_mixture, load_fixture_with_k, Dataset};
use crate::error::{Error, Result};
use crate::pipeline::RunConfig;

/// Where the dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic,
    Fixture,
}

/// The `[data]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub source: DataSource,
    pub k: usize,
    pub per_class: usize,
    pub d: usize,
    pub separation: f64,
    /// Dataset generation seed, independent of the run seed so sweeps over
    /// run seeds reuse identical data.
    pub seed: u64,
    /// CSV path when `source = fixture`.
    pub fixture: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Synthetic,
            k: 5,
            per_class: 400,
            d: 16,
            separation: 8.0,
            seed: 7,
            fixture: None,
        }
    }
}

impl DataConfig {
    pub fn load(&self) -> Result<Dataset> {
        match self.source {
            DataSource::Synthetic => {
                generate_gaussian_mixture(self.k, self.per_class, self.d, self.separation, self.seed)
            }
            DataSource::Fixture => {
                let path = self.fixture.as_ref().ok_or_else(|| Error::Config {
                    key: "data.fixture".into(),
                    msg: "required when source = fixture".into(),
                })?;
                load_fixture_with_k(path, Some(self.k))
            }
        }
    }
}

/// A parsed experiment: dataset source plus run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self> {
        parse(text)
    }

    /// Full validation, including the cross-section `n_l >= k` constraint
    /// when both are known.
    pub fn validate(&self) -> Result<()> {
        self.run.validate().map_err(reword_as_config)?;
        if self.data.k < 2 {
            return Err(Error::Config {
                key: "data.k".into(),
                msg: "need k >= 2".into(),
            });
        }
        if let Some(n_l) = self.run.n_l {
            if n_l < self.data.k {
                return Err(Error::Config {
                    key: "n_l".into(),
                    msg: format!("need n_l >= k, got n_l = {n_l}, k = {}", self.data.k),
                });
            }
        }
        if self.run.ablation.n_miss >= self.data.k && self.run.ablation.n_miss > 0 {
            return Err(Error::Config {
                key: "ablation.n_miss".into(),
                msg: "cannot drop every class".into(),
            });
        }
        Ok(())
    }

    /// Emits the resolved flat form with every value (defaults included).
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[data]");
        let _ = writeln!(
            s,
            "source = {}",
            match self.data.source {
                DataSource::Synthetic => "synthetic",
                DataSource::Fixture => "fixture",
            }
        );
        let _ = writeln!(s, "k = {}", self.data.k);
        let _ = writeln!(s, "per_class = {}", self.data.per_class);
        let _ = writeln!(s, "d = {}", self.data.d);
        let _ = writeln!(s, "separation = {}", self.data.separation);
        let _ = writeln!(s, "seed = {}", self.data.seed);
        if let Some(p) = &self.data.fixture {
            let _ = writeln!(s, "fixture = {}", p.display());
        }
        let _ = writeln!(s, "weak_sigma = {}", self.run.augment.weak_sigma);
        let _ = writeln!(s, "strong_sigma = {}", self.run.augment.strong_sigma);
        let _ = writeln!(s, "strong_dropout = {}", self.run.augment.strong_dropout);
        let _ = writeln!(s);
        let _ = writeln!(s, "[sampling]");
        let _ = writeln!(s, "sampler = {}", self.run.sampler);
        let _ = writeln!(s);
        let _ = writeln!(s, "[ot]");
        let _ = writeln!(s, "lambda = {}", self.run.lambda);
        let _ = writeln!(s, "max_iters = {}", self.run.ot_max_iters);
        let _ = writeln!(s, "tol = {}", self.run.ot_tol);
        let _ = writeln!(s);
        let _ = writeln!(s, "[learner]");
        let _ = writeln!(s, "hidden_dim = {}", self.run.hidden_dim);
        let _ = writeln!(s, "embed_dim = {}", self.run.embed_dim);
        let _ = writeln!(s, "lr = {}", self.run.lr);
        let _ = writeln!(s, "momentum = {}", self.run.momentum);
        let _ = writeln!(s, "tau = {}", self.run.tau);
        let _ = writeln!(s);
        let _ = writeln!(s, "[pipeline]");
        let _ = writeln!(s, "iterations = {}", self.run.iterations);
        match self.run.n_l {
            Some(n_l) => {
                let _ = writeln!(s, "n_l = {n_l}");
            }
            None => {
                let _ = writeln!(s, "n_l = {}", self.run.resolved_n_l(self.data.k));
            }
        }
        let _ = writeln!(s, "n_b = {}", self.run.n_b);
        let _ = writeln!(s, "n_t = {}", self.run.n_t);
        let _ = writeln!(s, "batch_size = {}", self.run.batch_size);
        let _ = writeln!(s, "seed = {}", self.run.seed);
        if let Some(p) = &self.run.debug_dir {
            let _ = writeln!(s, "debug_dir = {}", p.display());
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "[ablation]");
        let _ = writeln!(s, "n_miss = {}", self.run.ablation.n_miss);
        let _ = writeln!(s, "noise_ratio = {}", self.run.ablation.noise_ratio);
        let _ = writeln!(s, "fixed_dl = {}", self.run.ablation.fixed_dl);
        let _ = writeln!(s, "sample_level_phi = {}", self.run.ablation.sample_level_phi);
        s
    }
}

fn reword_as_config(e: Error) -> Error {
    match e {
        Error::InvalidParam { name, reason } => Error::Config {
            key: name.to_string(),
            msg: reason,
        },
        other => other,
    }
}

fn parse(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut section = String::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            match section.as_str() {
                "data" | "sampling" | "ot" | "learner" | "pipeline" | "ablation" => {}
                other => {
                    return Err(Error::Config {
                        key: format!("[{other}]"),
                        msg: format!("unknown section at line {}", lineno + 1),
                    })
                }
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: lineno + 1,
            msg: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        apply(&mut cfg, &section, key, value).map_err(|e| match e {
            Error::Config { key, msg } => Error::Config {
                key,
                msg: format!("{msg} (line {})", lineno + 1),
            },
            other => other,
        })?;
    }

    cfg.validate()?;
    Ok(cfg)
}

fn apply(cfg: &mut ExperimentConfig, section: &str, key: &str, value: &str) -> Result<()> {
    let full = |k: &str| format!("{section}.{k}");
    let bad = |k: &str, msg: String| Error::Config {
        key: full(k),
        msg,
    };
    macro_rules! parse_as {
        ($ty:ty) => {
            value
                .parse::<$ty>()
                .map_err(|_| bad(key, format!("cannot parse `{value}`")))?
        };
    }

    match (section, key) {
        ("data", "source") => {
            cfg.data.source = match value {
                "synthetic" => DataSource::Synthetic,
                "fixture" => DataSource::Fixture,
                other => return Err(bad(key, format!("expected synthetic|fixture, got `{other}`"))),
            }
        }
        ("data", "k") => cfg.data.k = parse_as!(usize),
        ("data", "per_class") => cfg.data.per_class = parse_as!(usize),
        ("data", "d") => cfg.data.d = parse_as!(usize),
        ("data", "separation") => cfg.data.separation = parse_as!(f64),
        ("data", "seed") => cfg.data.seed = parse_as!(u64),
        ("data", "fixture") => cfg.data.fixture = Some(PathBuf::from(value)),
        ("data", "weak_sigma") => cfg.run.augment.weak_sigma = parse_as!(f64),
        ("data", "strong_sigma") => cfg.run.augment.strong_sigma = parse_as!(f64),
        ("data", "strong_dropout") => cfg.run.augment.strong_dropout = parse_as!(f64),
        ("sampling", "sampler") => cfg.run.sampler = value.parse()?,
        ("ot", "lambda") => cfg.run.lambda = parse_as!(f64),
        ("ot", "max_iters") => cfg.run.ot_max_iters = parse_as!(usize),
        ("ot", "tol") => cfg.run.ot_tol = parse_as!(f64),
        ("learner", "hidden_dim") => cfg.run.hidden_dim = parse_as!(usize),
        ("learner", "embed_dim") => cfg.run.embed_dim = parse_as!(usize),
        ("learner", "lr") => cfg.run.lr = parse_as!(f64),
        ("learner", "momentum") => cfg.run.momentum = parse_as!(f64),
        ("learner", "tau") => cfg.run.tau = parse_as!(f64),
        ("pipeline", "iterations") => cfg.run.iterations = parse_as!(usize),
        ("pipeline", "n_l") => cfg.run.n_l = Some(parse_as!(usize)),
        ("pipeline", "n_b") => cfg.run.n_b = parse_as!(usize),
        ("pipeline", "n_t") => cfg.run.n_t = parse_as!(usize),
        ("pipeline", "batch_size") => cfg.run.batch_size = parse_as!(usize),
        ("pipeline", "seed") => cfg.run.seed = parse_as!(u64),
        ("pipeline", "debug_dir") => cfg.run.debug_dir = Some(PathBuf::from(value)),
        ("ablation", "n_miss") => cfg.run.ablation.n_miss = parse_as!(usize),
        ("ablation", "noise_ratio") => cfg.run.ablation.noise_ratio = parse_as!(f64),
        ("ablation", "fixed_dl") => cfg.run.ablation.fixed_dl = parse_as!(bool),
        ("ablation", "sample_level_phi") => cfg.run.ablation.sample_level_phi = parse_as!(bool),
        ("", k) => {
            return Err(Error::Config {
                key: k.to_string(),
                msg: "key appears before any [section]".into(),
            })
        }
        (s, k) => {
            return Err(Error::Config {
                key: format!("{s}.{k}"),
                msg: "unknown key".into(),
            })
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_emit_and_parse() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_config_string();
        let back = ExperimentConfig::from_str(&text).unwrap();
        // n_l gets pinned to its resolved value on emission.
        assert_eq!(back.run.n_l, Some(20));
        assert_eq!(back.data, cfg.data);
        assert_eq!(back.run.lambda, cfg.run.lambda);
    }

    #[test]
    fn unknown_key_is_a_hard_error() {
        let err = ExperimentConfig::from_str("[pipeline]\nfoo = 1\n").unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "pipeline.foo"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_section_is_a_hard_error() {
        assert!(ExperimentConfig::from_str("[nope]\n").is_err());
    }

    #[test]
    fn nl_below_k_names_the_key() {
        let err = ExperimentConfig::from_str("[data]\nk = 5\n[pipeline]\nn_l = 3\n").unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "n_l"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let cfg = ExperimentConfig::from_str("# top comment\n\n[pipeline]\n# another\niterations = 7\n")
            .unwrap();
        assert_eq!(cfg.run.iterations, 7);
    }

    #[test]
    fn synthetic_load_matches_generator() {
        let cfg = ExperimentConfig::default();
        let ds = cfg.data.load().unwrap();
        assert_eq!(ds.n(), 2000);
        assert_eq!(ds.k, 5);
    }
}
