//! Run configuration: a sectioned key-value file (TOML) with documented
//! defaults. Every run writes the resolved configuration next to its outputs
//! so results are reproducible from the artifacts alone.

use crate::error::{Error, Result};
use crate::media::{CoreMaterial, LayerConstants};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// Radius of the cloaked-region boundary.
    pub r_d: f64,
    /// Radius of the outer measurement boundary.
    pub r_omega: f64,
    /// Icosahedral subdivision level of solver meshes.
    pub refinement: u32,
    /// Per-triangle rule: "centroid" or "gauss3".
    pub rule: String,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig { r_d: 1.0, r_omega: 2.0, refinement: 3, rule: "centroid".into() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MediumConfig {
    pub alpha0: f64,
    pub beta0: f64,
    pub gamma0: f64,
    /// Use the literal rho^2 layer permeability instead of the
    /// pull-back-consistent one.
    pub literal_mu_scaling: bool,
}

impl Default for MediumConfig {
    fn default() -> Self {
        MediumConfig { alpha0: 1.0, beta0: 1.0, gamma0: 1.0, literal_mu_scaling: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoreGridConfig {
    pub eps: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl Default for CoreGridConfig {
    fn default() -> Self {
        CoreGridConfig { eps: vec![0.1, 1.0, 10.0, 100.0], mu: vec![1.0], sigma: vec![0.0, 1.0, 100.0] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Regularization parameters, strictly decreasing in (0, 1).
    pub rho: Vec<f64>,
    /// Obstacle scales for the exterior estimates.
    pub tau: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { rho: vec![0.4, 0.2, 0.1, 0.05], tau: vec![0.2, 0.1, 0.05] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub omega: f64,
    /// Harmonic truncation degree of the oracle.
    pub n_max: usize,
    pub seed: u64,
    pub geometry: GeometryConfig,
    pub medium: MediumConfig,
    pub cores: CoreGridConfig,
    pub sweep: SweepConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            omega: 1.0,
            n_max: 12,
            seed: 7,
            geometry: GeometryConfig::default(),
            medium: MediumConfig::default(),
            cores: CoreGridConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Config =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) {
            return Err(Error::Config("omega must be > 0".into()));
        }
        if self.n_max < 1 {
            return Err(Error::Config("n_max must be >= 1".into()));
        }
        if !(self.geometry.r_d > 0.0 && self.geometry.r_omega > self.geometry.r_d) {
            return Err(Error::Config("need 0 < r_d < r_omega".into()));
        }
        self.tri_rule()?;
        if self.sweep.rho.is_empty() {
            return Err(Error::Config("sweep.rho must be nonempty".into()));
        }
        let mut prev = 1.0;
        for &r in &self.sweep.rho {
            if !(r > 0.0 && r < 1.0 && r < prev) {
                return Err(Error::Config(
                    "sweep.rho must be strictly decreasing within (0, 1)".into(),
                ));
            }
            prev = r;
        }
        if self.cores.eps.is_empty() || self.cores.mu.is_empty() || self.cores.sigma.is_empty() {
            return Err(Error::Config("core grid must be nonempty".into()));
        }
        Ok(())
    }

    pub fn tri_rule(&self) -> Result<crate::geometry::TriRule> {
        match self.geometry.rule.as_str() {
            "centroid" => Ok(crate::geometry::TriRule::Centroid),
            "gauss3" => Ok(crate::geometry::TriRule::Gauss3),
            other => Err(Error::Config(format!(
                "unknown triangle rule '{other}' (expected 'centroid' or 'gauss3')"
            ))),
        }
    }

    pub fn layer_constants(&self) -> LayerConstants {
        LayerConstants {
            alpha0: self.medium.alpha0,
            beta0: self.medium.beta0,
            gamma0: self.medium.gamma0,
        }
    }

    /// Cartesian product of the core parameter grid.
    pub fn core_grid(&self) -> Vec<CoreMaterial> {
        let mut out = Vec::new();
        for &eps in &self.cores.eps {
            for &mu in &self.cores.mu {
                for &sigma in &self.cores.sigma {
                    out.push(CoreMaterial { eps, mu, sigma });
                }
            }
        }
        out
    }

    /// Serialize the resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization")
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("resolved-config.toml"), self.to_toml())?;
        Ok(())
    }
}
