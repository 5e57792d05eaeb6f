use serde::{Deserialize, Serialize};

use super::{CesParameters, ScenarioError};
use crate::qpcore::SolverSettings;

/// Loss ranked below trading and investment cost, which are ranked equal.
pub const DEFAULT_AHP_JUDGMENTS: [[f64; 3]; 3] = [[1.0, 0.25, 0.25], [4.0, 1.0, 1.0], [4.0, 1.0, 1.0]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    /// Weights for (loss, trade, invest); rescaled to sum to one.
    Explicit { values: [f64; 3] },
    /// Pairwise comparison matrix over (loss, trade, invest).
    Ahp { matrix: [[f64; 3]; 3] },
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Ahp { matrix: DEFAULT_AHP_JUDGMENTS }
    }
}

/// Whether utopia/nadir points are taken per candidate location or once
/// over every location's single-objective optima.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    #[default]
    PerLocation,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonConfig {
    /// Inferred from the profiles when absent.
    pub steps: Option<usize>,
    pub dt_hours: f64,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        HorizonConfig { steps: None, dt_hours: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub voltage_base_v: f64,
    pub power_base_kva: f64,
    /// Squared magnitudes in per unit of the voltage base.
    pub u0_pu: f64,
    pub umin_pu: f64,
    pub umax_pu: f64,
    pub horizon: HorizonConfig,
    pub ces: CesParameters,
    pub weights: WeightSpec,
    pub normalization: NormalizationMode,
    pub solver: SolverSettings,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            voltage_base_v: 400.0,
            power_base_kva: 100.0,
            u0_pu: 1.0,
            umin_pu: 0.9025,
            umax_pu: 1.1025,
            horizon: HorizonConfig::default(),
            ces: CesParameters::default(),
            weights: WeightSpec::default(),
            normalization: NormalizationMode::default(),
            solver: SolverSettings::default(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::InvalidParameter(m));
        if !(self.voltage_base_v > 0.0 && self.voltage_base_v.is_finite()) {
            return bad(format!("voltage_base_v must be positive, got {}", self.voltage_base_v));
        }
        if !(self.u0_pu > 0.0 && self.umin_pu >= 0.0 && self.umin_pu < self.umax_pu && self.umax_pu.is_finite()) {
            return bad(format!(
                "voltage limits need U0 > 0 and 0 <= Umin < Umax, got {}, {}, {}",
                self.u0_pu, self.umin_pu, self.umax_pu
            ));
        }
        if !(self.umin_pu <= self.u0_pu && self.u0_pu <= self.umax_pu) {
            return bad("slack voltage U0 lies outside [Umin, Umax]".into());
        }
        self.ces.validate()?;
        if let WeightSpec::Explicit { values } = &self.weights {
            if values.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || values.iter().sum::<f64>() <= 0.0 {
                return bad(format!("weights must be non-negative with a positive sum, got {values:?}"));
            }
        }
        self.solver
            .validate()
            .map_err(|e| ScenarioError::InvalidParameter(e.to_string()))
    }

    fn base_sq(&self) -> f64 {
        self.voltage_base_v * self.voltage_base_v
    }

    /// Squared slack voltage, V².
    pub fn u0(&self) -> f64 {
        self.u0_pu * self.base_sq()
    }

    pub fn umin(&self) -> f64 {
        self.umin_pu * self.base_sq()
    }

    pub fn umax(&self) -> f64 {
        self.umax_pu * self.base_sq()
    }
}
