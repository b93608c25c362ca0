//! Experiment configuration: scenario presets, TOML files, and flag overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, SystemParams};
use crate::error::{Error, Result};
use crate::feedback::{FeedbackMode, Rounding};
use crate::recovery::{RecoveryMethod, SuccessBound};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
    Custom,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Fig1 => "fig1",
            Scenario::Fig2 => "fig2",
            Scenario::Fig3 => "fig3",
            Scenario::Fig4 => "fig4",
            Scenario::Fig5 => "fig5",
            Scenario::Fig6 => "fig6",
            Scenario::Fig7 => "fig7",
            Scenario::Fig8 => "fig8",
            Scenario::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        toml::Value::String(s.to_string()).try_into().map_err(|_| {
            Error::Config(format!(
                "unknown scenario {s:?} (expected fig1..fig8 or custom)"
            ))
        })
    }

    /// Scenarios whose output is the error-covariance table rather than rates.
    pub fn is_wishart(&self) -> bool {
        matches!(self, Scenario::Fig1 | Scenario::Fig7 | Scenario::Fig8)
    }
}

/// How a downlink SNR in dB maps to the per-user SNR `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrConvention {
    /// The dB figure is `ρ` itself.
    #[default]
    PerUser,
    /// The dB figure is the total power `P = pρ`.
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixChoice {
    #[default]
    Gaussian,
    Bernoulli,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub users: usize,
    pub antennas: usize,
    pub snr_db: f64,
    pub snr_convention: SnrConvention,
    pub fb_snr_db: f64,
    /// Overrides the feedback-SNR conversion when set.
    pub sigma: Option<f64>,
    pub mode: FeedbackMode,
    pub recoveries: Vec<RecoveryMethod>,
    pub matrix: MatrixChoice,
    /// Block-diagonal variant with this many groups, run alongside.
    pub groups: Option<usize>,
    pub sparsity: Vec<usize>,
    pub c_half: Vec<f64>,
    pub thresholds: Vec<usize>,
    /// Fixed `p·k·r` budgets; `r` then follows from `k`.
    pub budget_bits: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub rounding: Rounding,
    pub literal_wishart: bool,
    pub success_bound: SuccessBound,
    pub dedicated_noisy: bool,
    pub dedicated_noiseless: bool,
    /// Skip points violating the sufficient recovery conditions.
    pub strict_conditions: bool,
    /// LASSO fidelity `½‖·‖²` instead of `‖·‖²`.
    pub half_fidelity: bool,
    pub alpha_multiplier: f64,
    /// Wishart scenarios: feedback SNR `ρ` as a linear value.
    pub wishart_rho: f64,
    /// Wishart scenarios: channel counts.
    pub wishart_r: Vec<usize>,
    /// Wishart scenarios: aspect ratios for the large-system comparison.
    pub wishart_beta: Vec<f64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Preset for `scenario`; every field can be overridden afterwards.
    pub fn preset(scenario: Scenario) -> Self {
        let c_grid: Vec<f64> = (1..=10).map(|i| i as f64 * 0.2).collect();
        let base = ExperimentConfig {
            scenario,
            users: 100,
            antennas: 4,
            snr_db: 10.0,
            snr_convention: SnrConvention::PerUser,
            fb_snr_db: 10.0,
            sigma: None,
            mode: FeedbackMode::Analog,
            recoveries: vec![RecoveryMethod::MaxCorr],
            matrix: MatrixChoice::Gaussian,
            groups: None,
            sparsity: vec![6],
            c_half: vec![0.4],
            thresholds: vec![1],
            budget_bits: Vec::new(),
            trials: 10_000,
            seed: 42,
            rounding: Rounding::HalfUp,
            literal_wishart: false,
            success_bound: SuccessBound::WithSparsity,
            dedicated_noisy: true,
            dedicated_noiseless: true,
            strict_conditions: false,
            half_fidelity: false,
            alpha_multiplier: 1.0,
            wishart_rho: 10.0,
            wishart_r: (1..=20).collect(),
            wishart_beta: vec![0.2, 0.5],
            out: None,
        };
        match scenario {
            Scenario::Fig1 => ExperimentConfig {
                sparsity: vec![1, 2, 3, 4, 5, 6],
                trials: 100_000,
                ..base
            },
            Scenario::Fig2 => ExperimentConfig {
                sparsity: vec![2, 3, 4, 5, 6],
                c_half: c_grid,
                ..base
            },
            Scenario::Fig3 => ExperimentConfig {
                recoveries: vec![RecoveryMethod::Lasso, RecoveryMethod::MaxCorr],
                groups: Some(2),
                c_half: c_grid,
                ..base
            },
            Scenario::Fig4 => ExperimentConfig {
                sigma: Some(0.0),
                sparsity: vec![5],
                c_half: c_grid,
                dedicated_noisy: false,
                ..base
            },
            Scenario::Fig5 => ExperimentConfig {
                mode: FeedbackMode::Digital,
                sparsity: vec![1],
                thresholds: vec![1, 2, 3, 4],
                c_half: (1..=12).map(|i| i as f64 * 0.25).collect(),
                rounding: Rounding::Ceil,
                ..base
            },
            Scenario::Fig6 => ExperimentConfig {
                mode: FeedbackMode::Digital,
                sparsity: vec![1],
                thresholds: (1..=8).collect(),
                budget_bits: vec![96, 192],
                ..base
            },
            Scenario::Fig7 => ExperimentConfig {
                sparsity: vec![1, 2],
                wishart_rho: 2.0,
                wishart_r: (2..=20).collect(),
                trials: 1_000_000,
                ..base
            },
            Scenario::Fig8 => ExperimentConfig {
                wishart_rho: 2.0,
                wishart_r: (1..=10).map(|i| 10 * i).collect(),
                trials: 100_000,
                ..base
            },
            Scenario::Custom => base,
        }
    }

    pub fn rho(&self) -> f64 {
        let linear = db_to_linear(self.snr_db);
        match self.snr_convention {
            SnrConvention::PerUser => linear,
            SnrConvention::Total => linear / self.antennas as f64,
        }
    }

    pub fn system(&self) -> Result<SystemParams> {
        SystemParams::new(self.users, self.antennas, self.rho())
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return cfg("trials must be at least 1".into());
        }
        self.system().map_err(|e| Error::Config(e.to_string()))?;
        if self.users < 3 {
            return cfg("at least 3 users are needed".into());
        }
        if self.sparsity.is_empty() || self.sparsity.contains(&0) {
            return cfg("sparsity values must be at least 1".into());
        }
        if self.thresholds.is_empty() || self.thresholds.contains(&0) {
            return cfg("threshold counts must be at least 1".into());
        }
        if self.mode == FeedbackMode::Analog && self.thresholds != [1] {
            return cfg("analog mode uses a single threshold".into());
        }
        if self.c_half.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return cfg("c-half values must be positive".into());
        }
        if self.recoveries.is_empty() {
            return cfg("at least one recovery method is needed".into());
        }
        if let Some(s) = self.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return cfg(format!("sigma={s} must be ≥ 0"));
            }
        }
        if self.groups == Some(0) {
            return cfg("groups must be at least 1".into());
        }
        if !(self.wishart_rho >= 0.0) {
            return cfg("wishart-rho must be ≥ 0".into());
        }
        if self.wishart_beta.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return cfg("wishart-beta values must lie in (0, 1)".into());
        }
        if self.alpha_multiplier <= 0.0 {
            return cfg("alpha-multiplier must be positive".into());
        }
        Ok(())
    }
}

/// Partial configuration shared by the TOML file and the command line; any
/// field left unset keeps the scenario preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Overrides {
    pub scenario: Option<Scenario>,
    pub users: Option<usize>,
    pub antennas: Option<usize>,
    pub snr_db: Option<f64>,
    pub snr_convention: Option<SnrConvention>,
    pub fb_snr_db: Option<f64>,
    pub sigma: Option<f64>,
    pub mode: Option<FeedbackMode>,
    pub recovery: Option<Vec<RecoveryMethod>>,
    pub matrix: Option<MatrixChoice>,
    pub groups: Option<usize>,
    pub sparsity: Option<Vec<usize>>,
    pub c_half: Option<Vec<f64>>,
    pub thresholds: Option<Vec<usize>>,
    pub budget_bits: Option<Vec<usize>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub ceil: Option<bool>,
    pub literal_wishart: Option<bool>,
    pub success_bound: Option<SuccessBound>,
    pub dedicated_noisy: Option<bool>,
    pub dedicated_noiseless: Option<bool>,
    pub strict_conditions: Option<bool>,
    pub half_fidelity: Option<bool>,
    pub alpha_multiplier: Option<f64>,
    pub wishart_rho: Option<f64>,
    pub wishart_r: Option<Vec<usize>>,
    pub wishart_beta: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
}

macro_rules! take_newer {
    ($base:ident, $top:ident; $($field:ident),* $(,)?) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl Overrides {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// `self` with every field set in `top` replaced.
    pub fn layered(mut self, top: Overrides) -> Self {
        take_newer!(self, top; scenario, users, antennas, snr_db, snr_convention, fb_snr_db, sigma, mode,
            recovery, matrix, groups, sparsity, c_half, thresholds, budget_bits, trials, seed, ceil,
            literal_wishart, success_bound, dedicated_noisy, dedicated_noiseless, strict_conditions,
            half_fidelity, alpha_multiplier, wishart_rho, wishart_r, wishart_beta, out);
        self
    }

    pub fn resolve(self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::preset(self.scenario.unwrap_or(Scenario::Custom));
        macro_rules! set {
            ($($src:ident => $dst:ident),* $(,)?) => { $( if let Some(v) = self.$src { c.$dst = v; } )* };
        }
        set!(users => users, antennas => antennas, snr_db => snr_db, snr_convention => snr_convention,
            fb_snr_db => fb_snr_db, mode => mode, recovery => recoveries, matrix => matrix,
            sparsity => sparsity, c_half => c_half, thresholds => thresholds, budget_bits => budget_bits,
            trials => trials, seed => seed, literal_wishart => literal_wishart,
            success_bound => success_bound, dedicated_noisy => dedicated_noisy,
            dedicated_noiseless => dedicated_noiseless, strict_conditions => strict_conditions,
            half_fidelity => half_fidelity, alpha_multiplier => alpha_multiplier,
            wishart_rho => wishart_rho, wishart_r => wishart_r, wishart_beta => wishart_beta);
        if self.sigma.is_some() {
            c.sigma = self.sigma;
        }
        if self.groups.is_some() {
            c.groups = self.groups;
        }
        if self.out.is_some() {
            c.out = self.out;
        }
        if let Some(ceil) = self.ceil {
            c.rounding = if ceil {
                Rounding::Ceil
            } else {
                Rounding::HalfUp
            };
        }
        if c.mode == FeedbackMode::Analog && c.thresholds != [1] {
            if !c.scenario.is_wishart() {
                log::warn!(
                    "analog mode uses a single threshold; ignoring thresholds {:?}",
                    c.thresholds
                );
            }
            c.thresholds = vec![1];
        }
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_file_overrides_preset() {
        let file = Overrides::from_toml_str(
            r#"
            scenario = "fig2"
            trials = 500
            seed = 7
            c-half = [0.4, 0.8]
            "#,
        )
        .unwrap();
        let flags = Overrides {
            seed: Some(9),
            ceil: Some(true),
            ..Default::default()
        };
        let cfg = file.layered(flags).resolve().unwrap();
        assert_eq!(cfg.scenario, Scenario::Fig2);
        assert_eq!(cfg.trials, 500);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.c_half, vec![0.4, 0.8]);
        assert_eq!(cfg.rounding, Rounding::Ceil);
        assert_eq!(cfg.sparsity, vec![2, 3, 4, 5, 6]);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        assert!(matches!(
            Overrides::from_toml_str("banana = 3"),
            Err(Error::Config(_))
        ));
        let bad = Overrides {
            trials: Some(0),
            ..Default::default()
        };
        assert!(matches!(bad.resolve(), Err(Error::Config(_))));
        let analog_k = Overrides {
            thresholds: Some(vec![4]),
            ..Default::default()
        };
        assert_eq!(analog_k.resolve().unwrap().thresholds, vec![1]);
        assert!(Scenario::parse("fig9").is_err());
        assert_eq!(Scenario::parse("fig6").unwrap(), Scenario::Fig6);
    }

    #[test]
    fn snr_conventions() {
        let mut cfg = ExperimentConfig::preset(Scenario::Custom);
        assert!((cfg.rho() - 10.0).abs() < 1e-12);
        cfg.snr_convention = SnrConvention::Total;
        assert!((cfg.rho() - 2.5).abs() < 1e-12);
    }
}
