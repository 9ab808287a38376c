//! Flat `key=value` experiment configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::backbone::{BackboneConfig, BackboneKind};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::losses::LossWeights;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Interaction file (`user<TAB>item` per line).
    pub dataset: Option<PathBuf>,
    pub backbone: BackboneConfig,
    pub encoder: EncoderConfig,
    pub weights: LossWeights,
    pub seed: u64,
    pub test_fraction: f64,
    pub batch_size: usize,
    pub backbone_epochs: usize,
    pub lr_backbone: f64,
    /// Simulated unlearning request size, percent of edges.
    pub rho_sim: f64,
    pub pretrain_rounds: usize,
    pub pretrain_epochs: usize,
    pub lr_pretrain: f64,
    pub finetune_epochs: usize,
    pub lr_finetune: f64,
    /// Injected adversarial edges, percent of training edges.
    pub attack_ratio: f64,
    pub attack_tail_factor: usize,
    pub top_n: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            backbone: BackboneConfig::default(),
            encoder: EncoderConfig::default(),
            weights: LossWeights::default(),
            seed: 2024,
            test_fraction: 0.2,
            batch_size: 2048,
            backbone_epochs: 100,
            lr_backbone: 1e-3,
            rho_sim: 1.0,
            pretrain_rounds: 15,
            pretrain_epochs: 10,
            lr_pretrain: 1e-2,
            finetune_epochs: 5,
            lr_finetune: 1e-3,
            attack_ratio: 1.0,
            attack_tail_factor: 10,
            top_n: 20,
        }
    }
}

fn parse<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("cannot parse `{value}`: {e}"))
}

impl ExperimentConfig {
    /// Every key, in the order [`Self::to_text`] writes them.
    pub const KEYS: &'static [&'static str] = &[
        "dataset",
        "backbone",
        "dim",
        "layers",
        "ssl_temperature",
        "ssl_weight",
        "edge_drop",
        "noise_eps",
        "reg",
        "iem_layers",
        "weighted_layers",
        "mlp_layers",
        "init_scale",
        "lambda_u",
        "lambda_p",
        "lambda_c",
        "tau_p",
        "tau_c",
        "idm_dropout",
        "contrast_all_layers",
        "seed",
        "test_fraction",
        "batch_size",
        "backbone_epochs",
        "lr_backbone",
        "rho_sim",
        "pretrain_rounds",
        "pretrain_epochs",
        "lr_pretrain",
        "finetune_epochs",
        "lr_finetune",
        "attack_ratio",
        "attack_tail_factor",
        "top_n",
    ];

    /// Sets one key. The error string describes the value problem only.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "dataset" => self.dataset = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "backbone" => self.backbone.kind = BackboneKind::from_str(v)?,
            "dim" => self.backbone.dim = parse(v)?,
            "layers" => self.backbone.layers = parse(v)?,
            "ssl_temperature" => self.backbone.ssl_temperature = parse(v)?,
            "ssl_weight" => self.backbone.ssl_weight = parse(v)?,
            "edge_drop" => self.backbone.edge_drop = parse(v)?,
            "noise_eps" => self.backbone.noise_eps = parse(v)?,
            "reg" => self.backbone.reg = parse(v)?,
            "iem_layers" => self.encoder.iem_layers = parse(v)?,
            "weighted_layers" => self.encoder.weighted_layers = parse(v)?,
            "mlp_layers" => self.encoder.mlp_layers = parse(v)?,
            "init_scale" => self.encoder.init_scale = parse(v)?,
            "lambda_u" => self.weights.lambda_u = parse(v)?,
            "lambda_p" => self.weights.lambda_p = parse(v)?,
            "lambda_c" => self.weights.lambda_c = parse(v)?,
            "tau_p" => self.weights.tau_p = parse(v)?,
            "tau_c" => self.weights.tau_c = parse(v)?,
            "idm_dropout" => self.weights.dropout = parse(v)?,
            "contrast_all_layers" => self.weights.contrast_all_layers = parse(v)?,
            "seed" => self.seed = parse(v)?,
            "test_fraction" => self.test_fraction = parse(v)?,
            "batch_size" => self.batch_size = parse(v)?,
            "backbone_epochs" => self.backbone_epochs = parse(v)?,
            "lr_backbone" => self.lr_backbone = parse(v)?,
            "rho_sim" => self.rho_sim = parse(v)?,
            "pretrain_rounds" => self.pretrain_rounds = parse(v)?,
            "pretrain_epochs" => self.pretrain_epochs = parse(v)?,
            "lr_pretrain" => self.lr_pretrain = parse(v)?,
            "finetune_epochs" => self.finetune_epochs = parse(v)?,
            "lr_finetune" => self.lr_finetune = parse(v)?,
            "attack_ratio" => self.attack_ratio = parse(v)?,
            "attack_tail_factor" => self.attack_tail_factor = parse(v)?,
            "top_n" => self.top_n = parse(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "dataset" => self.dataset.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            "backbone" => self.backbone.kind.to_string(),
            "dim" => self.backbone.dim.to_string(),
            "layers" => self.backbone.layers.to_string(),
            "ssl_temperature" => self.backbone.ssl_temperature.to_string(),
            "ssl_weight" => self.backbone.ssl_weight.to_string(),
            "edge_drop" => self.backbone.edge_drop.to_string(),
            "noise_eps" => self.backbone.noise_eps.to_string(),
            "reg" => self.backbone.reg.to_string(),
            "iem_layers" => self.encoder.iem_layers.to_string(),
            "weighted_layers" => self.encoder.weighted_layers.to_string(),
            "mlp_layers" => self.encoder.mlp_layers.to_string(),
            "init_scale" => self.encoder.init_scale.to_string(),
            "lambda_u" => self.weights.lambda_u.to_string(),
            "lambda_p" => self.weights.lambda_p.to_string(),
            "lambda_c" => self.weights.lambda_c.to_string(),
            "tau_p" => self.weights.tau_p.to_string(),
            "tau_c" => self.weights.tau_c.to_string(),
            "idm_dropout" => self.weights.dropout.to_string(),
            "contrast_all_layers" => self.weights.contrast_all_layers.to_string(),
            "seed" => self.seed.to_string(),
            "test_fraction" => self.test_fraction.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "backbone_epochs" => self.backbone_epochs.to_string(),
            "lr_backbone" => self.lr_backbone.to_string(),
            "rho_sim" => self.rho_sim.to_string(),
            "pretrain_rounds" => self.pretrain_rounds.to_string(),
            "pretrain_epochs" => self.pretrain_epochs.to_string(),
            "lr_pretrain" => self.lr_pretrain.to_string(),
            "finetune_epochs" => self.finetune_epochs.to_string(),
            "lr_finetune" => self.lr_finetune.to_string(),
            "attack_ratio" => self.attack_ratio.to_string(),
            "attack_tail_factor" => self.attack_tail_factor.to_string(),
            "top_n" => self.top_n.to_string(),
            _ => return None,
        })
    }

    /// The fully resolved configuration as `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            let _ = writeln!(out, "{key}={}", self.get(key).unwrap_or_default());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.encoder.validate()?;
        self.weights.validate()?;
        let check = |ok: bool, key: &str, message: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config {
                    origin: "resolved config".into(),
                    key: key.into(),
                    message: message.into(),
                })
            }
        };
        check(self.test_fraction > 0.0 && self.test_fraction < 1.0, "test_fraction", "must lie in (0, 1)")?;
        check(self.batch_size >= 1, "batch_size", "must be at least 1")?;
        check(self.rho_sim > 0.0 && self.rho_sim < 100.0, "rho_sim", "must lie in (0, 100)")?;
        check(self.attack_ratio > 0.0 && self.attack_ratio < 100.0, "attack_ratio", "must lie in (0, 100)")?;
        check(self.attack_tail_factor >= 1, "attack_tail_factor", "must be at least 1")?;
        check(self.top_n >= 1, "top_n", "must be at least 1")?;
        for (key, lr) in [
            ("lr_backbone", self.lr_backbone),
            ("lr_pretrain", self.lr_pretrain),
            ("lr_finetune", self.lr_finetune),
        ] {
            check(lr > 0.0 && lr.is_finite(), key, "must be positive")?;
        }
        Ok(())
    }

    /// Applies `key=value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.apply_assignment(line, &format!("{origin}:{}", idx + 1))?;
        }
        Ok(())
    }

    fn apply_assignment(&mut self, line: &str, origin: &str) -> Result<()> {
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config {
                origin: origin.into(),
                key: line.into(),
                message: "expected key=value".into(),
            });
        };
        let key = key.trim();
        self.set(key, value).map_err(|message| Error::Config {
            origin: origin.into(),
            key: key.into(),
            message,
        })
    }
}

/// Defaults, then the file (if any), then each `key=value` override in order.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_text(&text, &path.display().to_string())?;
    }
    for (k, o) in overrides.iter().enumerate() {
        cfg.apply_assignment(o.trim(), &format!("override #{}", k + 1))?;
    }
    cfg.validate()?;
    Ok(cfg)
}
