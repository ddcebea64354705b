use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{dbm_to_watts, LinkBudget, Scenario, SystemGeometry};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    /// Encoded pilots with iterative refinement.
    Proposed,
    /// Separate direct and reflected training, no refinement.
    ConventionalOnoff,
}

impl std::str::FromStr for EstimatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "proposed" => Ok(EstimatorMode::Proposed),
            "onoff" | "conventional" | "conventional_onoff" => Ok(EstimatorMode::ConventionalOnoff),
            other => Err(Error::Config(format!("unknown estimator mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodeConfig {
    pub n: usize,
    pub rate: f64,
    pub column_weight: usize,
}

impl Default for CodeConfig {
    fn default() -> Self {
        CodeConfig { n: 512, rate: 0.5, column_weight: 3 }
    }
}

/// Training lengths of the conventional baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConventionalConfig {
    pub direct_pilots: usize,
    pub reflected_pilots: usize,
}

impl Default for ConventionalConfig {
    fn default() -> Self {
        ConventionalConfig { direct_pilots: 8, reflected_pilots: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub geometry: SystemGeometry,
    pub scenario: Scenario,
    pub code: CodeConfig,
    /// Pilot symbols per packet, `N_p`.
    pub pilots: usize,
    /// Per-user transmit powers in dBm.
    pub pt_dbm: Vec<f64>,
    pub trials: usize,
    pub idd_iterations: usize,
    pub bp_iterations: usize,
    /// Channel-estimation refinements `ρ`.
    pub ce_iterations: usize,
    pub tol: f64,
    pub seed: u64,
    pub mode: EstimatorMode,
    pub noise_psd_dbm_hz: f64,
    pub bandwidth_hz: f64,
    pub direct_extra_loss_db: f64,
    /// Detect with the true channels and skip estimation.
    pub genie_csi: bool,
    pub include_data_segment: bool,
    pub exclude_unconverged: bool,
    /// Alternating filter / reflection updates when designing `φ_o`.
    pub phi_rounds: usize,
    pub log_condition: bool,
    pub conventional: ConventionalConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            geometry: SystemGeometry::default(),
            scenario: Scenario::Los,
            code: CodeConfig::default(),
            pilots: 16,
            pt_dbm: (0..9).map(|i| -10.0 + 5.0 * i as f64).collect(),
            trials: 200,
            idd_iterations: 2,
            bp_iterations: 50,
            ce_iterations: 1,
            tol: 1e-3,
            seed: 1,
            mode: EstimatorMode::Proposed,
            noise_psd_dbm_hz: -170.0,
            bandwidth_hz: 1e6,
            direct_extra_loss_db: 0.0,
            genie_csi: false,
            include_data_segment: true,
            exclude_unconverged: false,
            phi_rounds: 3,
            log_condition: true,
            conventional: ConventionalConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let positive = [
            ("trials", self.trials),
            ("idd_iterations", self.idd_iterations),
            ("bp_iterations", self.bp_iterations),
            ("code.n", self.code.n),
            ("code.column_weight", self.code.column_weight),
            ("phi_rounds", self.phi_rounds),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.pt_dbm.is_empty() || self.pt_dbm.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("power grid must be non-empty and finite".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config("tol must be non-negative".into()));
        }
        if !(self.bandwidth_hz > 0.0) || !self.noise_psd_dbm_hz.is_finite() || !self.direct_extra_loss_db.is_finite() {
            return Err(Error::Config("bandwidth must be positive and noise/loss values finite".into()));
        }
        if !(self.code.rate > 0.0 && self.code.rate < 1.0) {
            return Err(Error::Config(format!("code rate {} outside (0, 1)", self.code.rate)));
        }
        match self.mode {
            EstimatorMode::Proposed => {
                if self.pilots == 0 || self.pilots % 2 != 0 {
                    return Err(Error::Config(format!("pilot count must be positive and even, got {}", self.pilots)));
                }
            }
            EstimatorMode::ConventionalOnoff => {
                let c = &self.conventional;
                if c.direct_pilots == 0 || c.direct_pilots % 2 != 0 || c.reflected_pilots == 0 {
                    return Err(Error::Config("conventional pilot counts must be positive, direct even".into()));
                }
            }
        }
        Ok(())
    }

    /// `σ_n²` in watts.
    pub fn noise_power(&self) -> f64 {
        dbm_to_watts(self.noise_psd_dbm_hz) * self.bandwidth_hz
    }

    pub fn budget(&self, pt_dbm: f64) -> LinkBudget {
        LinkBudget {
            sigma_n2: self.noise_power(),
            sigma_x2: dbm_to_watts(pt_dbm),
            direct_extra_loss_db: self.direct_extra_loss_db,
        }
    }

    /// Pilot symbols consumed per packet by the configured estimator.
    pub fn pilots_used(&self) -> usize {
        match self.mode {
            EstimatorMode::Proposed => self.pilots,
            EstimatorMode::ConventionalOnoff => self.conventional.direct_pilots + self.conventional.reflected_pilots,
        }
    }
}
