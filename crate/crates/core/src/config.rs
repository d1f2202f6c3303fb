//! `key = value` run configuration with `#` comments.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grounding::{RuleId, RuleWeights, DEFAULT_GROUNDING_THRESHOLD};
use crate::ingest::{CskFormat, DEFAULT_TAXONOMY_CUTOFF};
use crate::partition::DEFAULT_SIBLING_CAP;
use crate::priors::DEFAULT_PRIOR_THRESHOLD;

pub const DEFAULT_TUNE_BUDGET: usize = 60;
pub const DEFAULT_ENRICH_LEVELS: [f64; 3] = [0.25, 0.5, 1.0];

/// Input and output files. Relative paths in a config file resolve against
/// the file's directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub csk: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub entailment: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub priors: Option<PathBuf>,
    pub pairs_cache: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub telemetry: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub paths: Paths,
    pub csk_format: CskFormat,
    pub taxonomy_cutoff: f64,
    pub prior_threshold: f64,
    pub grounding_threshold: f64,
    pub sibling_cap: usize,
    /// 0 means one worker per available core.
    pub workers: usize,
    pub seed: u64,
    pub max_iters: Option<usize>,
    /// Add inherited candidates before grounding.
    pub expand: bool,
    pub enrich_levels: Vec<f64>,
    pub tune_budget: usize,
    pub weights: RuleWeights,
    base_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            csk_format: CskFormat::Triples,
            taxonomy_cutoff: DEFAULT_TAXONOMY_CUTOFF,
            prior_threshold: DEFAULT_PRIOR_THRESHOLD,
            grounding_threshold: DEFAULT_GROUNDING_THRESHOLD,
            sibling_cap: DEFAULT_SIBLING_CAP,
            workers: 0,
            seed: 0,
            max_iters: None,
            expand: true,
            enrich_levels: DEFAULT_ENRICH_LEVELS.to_vec(),
            tune_budget: DEFAULT_TUNE_BUDGET,
            weights: RuleWeights::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn unit(key: &str, value: &str) -> Result<f64> {
    let v: f64 = number(key, value)?;
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::config(key, format!("{v} is outside [0, 1]")));
    }
    Ok(v)
}

fn similarity_threshold(key: &str, value: &str) -> Result<f64> {
    let v = unit(key, value)?;
    if v <= 0.5 {
        return Err(Error::config(
            key,
            format!("{v} must exceed 0.5, the similarity of unrelated properties"),
        ));
    }
    Ok(v)
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::config(key, format!("expected a boolean, got `{value}`"))),
    }
}

impl Config {
    pub const PATH_KEYS: [&'static str; 9] = [
        "csk",
        "taxonomy",
        "embeddings",
        "entailment",
        "labels",
        "priors",
        "pairs_cache",
        "output",
        "telemetry",
    ];

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::parse(origin, i + 1, "expected `key = value`"));
            };
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    /// Applies one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = || (!value.is_empty()).then(|| PathBuf::from(value));
        match key {
            "csk" => self.paths.csk = path(),
            "taxonomy" => self.paths.taxonomy = path(),
            "embeddings" => self.paths.embeddings = path(),
            "entailment" => self.paths.entailment = path(),
            "labels" => self.paths.labels = path(),
            "priors" => self.paths.priors = path(),
            "pairs_cache" => self.paths.pairs_cache = path(),
            "output" => self.paths.output = path(),
            "telemetry" => self.paths.telemetry = path(),
            "csk_format" => {
                self.csk_format = CskFormat::parse(value)
                    .ok_or_else(|| Error::config(key, "expected `triples` or `pairs`"))?
            }
            "taxonomy_cutoff" => self.taxonomy_cutoff = unit(key, value)?,
            "prior_threshold" => self.prior_threshold = similarity_threshold(key, value)?,
            "grounding_threshold" => self.grounding_threshold = similarity_threshold(key, value)?,
            "sibling_cap" => self.sibling_cap = number(key, value)?,
            "workers" => self.workers = number(key, value)?,
            "seed" => self.seed = number(key, value)?,
            "max_iters" => {
                self.max_iters = match value {
                    "" | "auto" => None,
                    v => Some(number(key, v)?),
                }
            }
            "expand" => self.expand = boolean(key, value)?,
            "enrich_levels" => {
                self.enrich_levels = value
                    .split(',')
                    .map(|v| {
                        let x: f64 = number(key, v.trim())?;
                        if x > 0.0 && x.is_finite() {
                            Ok(x)
                        } else {
                            Err(Error::config(key, format!("level {x} must be positive")))
                        }
                    })
                    .collect::<Result<_>>()?
            }
            "tune_budget" => self.tune_budget = number(key, value)?,
            _ => {
                let Some(tag) = key.strip_prefix("weight.") else {
                    return Err(Error::config(key, "unknown key"));
                };
                let rule = RuleId::parse(tag).ok_or_else(|| Error::config(key, "unknown rule"))?;
                let w: f64 = number(key, value)?;
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(Error::config(key, format!("weight {w} must be non-negative")));
                }
                self.weights.set(rule, w);
            }
        }
        Ok(())
    }

    /// Resolves a configured path, failing with an error naming `key` when
    /// it is unset or does not exist.
    pub fn require(&self, key: &str) -> Result<PathBuf> {
        let p = self
            .optional(key)?
            .ok_or_else(|| Error::config(key, "required path is not set"))?;
        if !p.exists() {
            return Err(Error::config(key, format!("{} does not exist", p.display())));
        }
        Ok(p)
    }

    /// Like [`Config::require`] but an unset key is `Ok(None)`.
    pub fn optional(&self, key: &str) -> Result<Option<PathBuf>> {
        let p = match key {
            "csk" => &self.paths.csk,
            "taxonomy" => &self.paths.taxonomy,
            "embeddings" => &self.paths.embeddings,
            "entailment" => &self.paths.entailment,
            "labels" => &self.paths.labels,
            "priors" => &self.paths.priors,
            "pairs_cache" => &self.paths.pairs_cache,
            "output" => &self.paths.output,
            "telemetry" => &self.paths.telemetry,
            _ => return Err(Error::config(key, "not a path key")),
        };
        Ok(p.as_ref().map(|p| self.base_dir.join(p)))
    }

    /// An existing input file, or `None` when the key is unset.
    pub fn existing(&self, key: &str) -> Result<Option<PathBuf>> {
        match self.optional(key)? {
            Some(_) => self.require(key).map(Some),
            None => Ok(None),
        }
    }

    pub fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }

    /// Every key with its current value, in a form [`Config::parse`] accepts.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        for key in Self::PATH_KEYS {
            let v = self.optional(key).ok().flatten();
            put(key, v.map(|p| p.display().to_string()).unwrap_or_default());
        }
        put(
            "csk_format",
            match self.csk_format {
                CskFormat::Triples => "triples".into(),
                CskFormat::Pairs => "pairs".into(),
            },
        );
        put("taxonomy_cutoff", self.taxonomy_cutoff.to_string());
        put("prior_threshold", self.prior_threshold.to_string());
        put("grounding_threshold", self.grounding_threshold.to_string());
        put("sibling_cap", self.sibling_cap.to_string());
        put("workers", self.workers.to_string());
        put("seed", self.seed.to_string());
        put("max_iters", self.max_iters.map_or("auto".into(), |n| n.to_string()));
        put("expand", self.expand.to_string());
        put(
            "enrich_levels",
            self.enrich_levels
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        put("tune_budget", self.tune_budget.to_string());
        for r in RuleId::ALL {
            put(&format!("weight.{}", r.tag()), self.weights.get(r).to_string());
        }
        out
    }
}
