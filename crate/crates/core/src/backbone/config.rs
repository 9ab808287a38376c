use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BackboneKind {
    LightGcn,
    /// SGL with edge-dropout views.
    SglEd,
    SimGcl,
}

impl BackboneKind {
    pub const ALL: [BackboneKind; 3] = [BackboneKind::LightGcn, BackboneKind::SglEd, BackboneKind::SimGcl];

    pub fn name(self) -> &'static str {
        match self {
            BackboneKind::LightGcn => "lightgcn",
            BackboneKind::SglEd => "sgl-ed",
            BackboneKind::SimGcl => "simgcl",
        }
    }

    pub fn has_ssl(self) -> bool {
        !matches!(self, BackboneKind::LightGcn)
    }
}

impl fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BackboneKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lightgcn" | "gcn" => Ok(BackboneKind::LightGcn),
            "sgl-ed" | "sgl" => Ok(BackboneKind::SglEd),
            "simgcl" => Ok(BackboneKind::SimGcl),
            other => Err(format!("unknown backbone `{other}` (expected lightgcn, sgl-ed or simgcl)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackboneConfig {
    pub kind: BackboneKind,
    pub dim: usize,
    /// Number of stored layers, counting E₀; the readout sums all of them.
    pub layers: usize,
    pub ssl_temperature: f64,
    pub ssl_weight: f64,
    pub edge_drop: f64,
    pub noise_eps: f64,
    /// L2 weight on the batch rows of E₀.
    pub reg: f64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            kind: BackboneKind::LightGcn,
            dim: 128,
            layers: 3,
            ssl_temperature: 0.2,
            ssl_weight: 0.1,
            edge_drop: 0.1,
            noise_eps: 0.1,
            reg: 1e-4,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument("embedding dim must be positive".into()));
        }
        if self.layers == 0 {
            return Err(Error::InvalidArgument("layer count must be at least 1".into()));
        }
        if self.ssl_temperature.is_nan() || self.ssl_temperature <= 0.0 {
            return Err(Error::InvalidArgument("ssl temperature must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.edge_drop) {
            return Err(Error::InvalidArgument("edge drop rate must lie in [0, 1)".into()));
        }
        if self.noise_eps < 0.0 || self.ssl_weight < 0.0 || self.reg < 0.0 {
            return Err(Error::InvalidArgument(
                "noise magnitude, ssl weight and reg must be non-negative".into(),
            ));
        }
        Ok(())
    }
}
