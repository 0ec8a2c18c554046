//! Flat key=value configuration with CLI overrides.
//!
//! One `key = value` pair per line, `#` starts a comment, unknown keys are
//! rejected. Every key has a default, so an empty (or absent) config is
//! valid; flags override file values; the effective settings are written
//! back out as `config.resolved` next to the run outputs.

use std::path::{Path, PathBuf};

use advaug_core::data::{DataKind, DatasetSpec};
use advaug_core::losses::{LossWeights, Mode};
use advaug_core::trainer::{Strategy, TrainConfig};
use advaug_core::{Error, Result};

#[derive(Debug, Clone)]
pub struct Settings {
    pub strategy: Strategy,
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay_at: f64,
    pub lr_final: f64,
    pub batch_size: usize,
    pub n_aug: usize,
    pub m_aug: f64,
    pub lambda_c: f64,
    pub lambda_e: f64,
    pub lambda_t: f64,
    pub seeds: Vec<u64>,
    pub holdout_fraction: f64,
    pub stn_warm_start: f64,
    pub target_domain: String,
    pub data: String,
    pub out: PathBuf,
}

impl Default for Settings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Settings {
            strategy: t.strategy,
            epochs: t.epochs,
            lr: t.lr,
            lr_decay_at: t.lr_decay_at,
            lr_final: t.lr_final,
            batch_size: t.batch_size,
            n_aug: t.n_aug,
            m_aug: t.m_aug,
            lambda_c: t.weights.lambda_c,
            lambda_e: t.weights.lambda_e,
            lambda_t: t.weights.lambda_t,
            seeds: t.seeds,
            holdout_fraction: t.holdout_fraction,
            stn_warm_start: t.stn_warm_start,
            target_domain: t.target_domain,
            data: "synthetic:samples=40,classes=7,size=16,channels=3,seed=17".into(),
            out: PathBuf::from("runs/latest"),
        }
    }
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("bad seed {p:?} (want comma-separated integers)")))
        })
        .collect()
}

pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad grid value {p:?} (want comma-separated numbers)")))
        })
        .collect()
}

impl Settings {
    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("bad value {v:?} for key {key}")))
        }
        match key {
            "strategy" => self.strategy = Strategy::parse(value)?,
            "epochs" => self.epochs = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "lr_decay_at" => self.lr_decay_at = num(key, value)?,
            "lr_final" => self.lr_final = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "n_aug" => self.n_aug = num(key, value)?,
            "m_aug" => self.m_aug = num(key, value)?,
            "lambda_c" => self.lambda_c = num(key, value)?,
            "lambda_e" => self.lambda_e = num(key, value)?,
            "lambda_t" => self.lambda_t = num(key, value)?,
            "seeds" => self.seeds = parse_seeds(value)?,
            "holdout_fraction" => self.holdout_fraction = num(key, value)?,
            "stn_warm_start" => self.stn_warm_start = num(key, value)?,
            "target_domain" => self.target_domain = value.to_string(),
            "data" => self.data = value.to_string(),
            "out" => self.out = PathBuf::from(value),
            other => {
                return Err(Error::Config(format!(
                    "unknown config key {other:?} (see README for the key list)"
                )))
            }
        }
        Ok(())
    }

    /// Read a config file; every line is `key = value`, `#` comments.
    pub fn load(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut s = Settings::default();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}:{}: expected key = value, got {raw:?}",
                    path.display(),
                    ln + 1
                )));
            };
            s.apply(k.trim(), v.trim())?;
        }
        Ok(s)
    }

    /// The effective settings, in the same syntax `load` accepts.
    pub fn resolved(&self, mode: Option<Mode>) -> String {
        let mut out = String::new();
        if let Some(m) = mode {
            out.push_str(&format!("# mode: {} (set by the subcommand)\n", m.name()));
        }
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        out.push_str(&format!("strategy = {}\n", self.strategy.name()));
        out.push_str(&format!("epochs = {}\n", self.epochs));
        out.push_str(&format!("lr = {}\n", self.lr));
        out.push_str(&format!("lr_decay_at = {}\n", self.lr_decay_at));
        out.push_str(&format!("lr_final = {}\n", self.lr_final));
        out.push_str(&format!("batch_size = {}\n", self.batch_size));
        out.push_str(&format!("n_aug = {}\n", self.n_aug));
        out.push_str(&format!("m_aug = {}\n", self.m_aug));
        out.push_str(&format!("lambda_c = {}\n", self.lambda_c));
        out.push_str(&format!("lambda_e = {}\n", self.lambda_e));
        out.push_str(&format!("lambda_t = {}\n", self.lambda_t));
        out.push_str(&format!("seeds = {}\n", seeds.join(",")));
        out.push_str(&format!("holdout_fraction = {}\n", self.holdout_fraction));
        out.push_str(&format!("stn_warm_start = {}\n", self.stn_warm_start));
        out.push_str(&format!("target_domain = {}\n", self.target_domain));
        out.push_str(&format!("data = {}\n", self.data));
        out.push_str(&format!("out = {}\n", self.out.display()));
        out
    }

    pub fn train_config(&self, mode: Mode) -> TrainConfig {
        TrainConfig {
            mode,
            strategy: self.strategy,
            epochs: self.epochs,
            lr: self.lr,
            lr_decay_at: self.lr_decay_at,
            lr_final: self.lr_final,
            batch_size: self.batch_size,
            n_aug: self.n_aug,
            m_aug: self.m_aug,
            weights: LossWeights {
                lambda_c: self.lambda_c,
                lambda_e: self.lambda_e,
                lambda_t: self.lambda_t,
            },
            seeds: self.seeds.clone(),
            holdout_fraction: self.holdout_fraction,
            stn_warm_start: self.stn_warm_start,
            target_domain: self.target_domain.clone(),
        }
    }
}

/// Dataset spec grammar:
///   `synthetic[:k=v,...]` with keys samples, classes, size, channels, seed
///   `dir:PATH[,k=v,...]`  with keys classes, size, channels
pub fn parse_data_spec(spec: &str) -> Result<DatasetSpec> {
    let (head, rest) = match spec.split_once(':') {
        Some((h, r)) => (h, r),
        None => (spec, ""),
    };
    let bad = |msg: String| Error::Config(msg);
    match head {
        "synthetic" => {
            let (mut samples, mut classes, mut size, mut channels, mut seed) =
                (40usize, 7usize, 16usize, 3usize, 17u64);
            for pair in rest.split(',').filter(|p| !p.is_empty()) {
                let Some((k, v)) = pair.split_once('=') else {
                    return Err(bad(format!("bad data spec entry {pair:?} (want key=value)")));
                };
                let parse = |v: &str| -> Result<usize> {
                    v.parse().map_err(|_| bad(format!("bad number {v:?} in data spec")))
                };
                match k {
                    "samples" => samples = parse(v)?,
                    "classes" => classes = parse(v)?,
                    "size" => size = parse(v)?,
                    "channels" => channels = parse(v)?,
                    "seed" => {
                        seed = v
                            .parse()
                            .map_err(|_| bad(format!("bad seed {v:?} in data spec")))?
                    }
                    other => return Err(bad(format!("unknown data spec key {other:?}"))),
                }
            }
            Ok(DatasetSpec {
                kind: DataKind::Synthetic { samples_per_class: samples },
                num_classes: classes,
                channels,
                size,
                holdout_fraction: 0.0,
                seed,
            })
        }
        "dir" => {
            let mut parts = rest.split(',');
            let path = parts
                .next()
                .filter(|p| !p.is_empty())
                .ok_or_else(|| bad("dir spec needs a path: dir:PATH[,k=v,...]".into()))?;
            let (mut classes, mut size, mut channels) = (2usize, 16usize, 3usize);
            for pair in parts {
                let Some((k, v)) = pair.split_once('=') else {
                    return Err(bad(format!("bad data spec entry {pair:?} (want key=value)")));
                };
                let parse = |v: &str| -> Result<usize> {
                    v.parse().map_err(|_| bad(format!("bad number {v:?} in data spec")))
                };
                match k {
                    "classes" => classes = parse(v)?,
                    "size" => size = parse(v)?,
                    "channels" => channels = parse(v)?,
                    other => return Err(bad(format!("unknown data spec key {other:?}"))),
                }
            }
            Ok(DatasetSpec {
                kind: DataKind::Directory { root: PathBuf::from(path) },
                num_classes: classes,
                channels,
                size,
                holdout_fraction: 0.0,
                seed: 0,
            })
        }
        other => Err(bad(format!(
            "unknown data spec kind {other:?} (want synthetic:... or dir:...)"
        ))),
    }
}
