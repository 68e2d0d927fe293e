//! Analytic load presets: separable data `value * profile(t)` for body forces,
//! sources, tractions and boundary pressures.

use serde::{Deserialize, Serialize};

/// Scalar time profile of a separable load.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeProfile {
    /// `1` for all times.
    #[default]
    Constant,
    /// `t`.
    Ramp,
    /// `sin(omega * t)`.
    Sinusoid { omega: f64 },
    /// Heaviside step: `1` for `t >= t_on`, else `0`.
    Step { t_on: f64 },
}

impl TimeProfile {
    pub fn factor(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Ramp => t,
            TimeProfile::Sinusoid { omega } => (omega * t).sin(),
            TimeProfile::Step { t_on } => {
                if t >= t_on {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Spatially constant vector-valued load with a time profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorLoad {
    pub value: [f64; 2],
    #[serde(default)]
    pub profile: TimeProfile,
}

impl VectorLoad {
    pub fn constant(x: f64, y: f64) -> Self {
        Self {
            value: [x, y],
            profile: TimeProfile::Constant,
        }
    }

    pub fn at(&self, t: f64) -> [f64; 2] {
        let s = self.profile.factor(t);
        [self.value[0] * s, self.value[1] * s]
    }
}

/// Spatially constant scalar load with a time profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarLoad {
    pub value: f64,
    #[serde(default)]
    pub profile: TimeProfile,
}

impl ScalarLoad {
    pub fn constant(value: f64) -> Self {
        Self {
            value,
            profile: TimeProfile::Constant,
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        self.value * self.profile.factor(t)
    }
}

/// Volume data of the three equations: solid body force `f`, fluid mass source
/// `h` and the Darcy forcing `g` (e.g. gravity). Surface data (tractions and
/// boundary pressures) lives with the boundary conditions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    #[serde(default)]
    pub body_force: Option<VectorLoad>,
    #[serde(default)]
    pub mass_source: Option<ScalarLoad>,
    #[serde(default)]
    pub darcy_force: Option<VectorLoad>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_factors() {
        assert_eq!(TimeProfile::Constant.factor(3.0), 1.0);
        assert_eq!(TimeProfile::Ramp.factor(0.25), 0.25);
        let s = TimeProfile::Sinusoid { omega: 2.0 };
        assert!((s.factor(0.7) - (1.4f64).sin()).abs() <= 1e-15);
        let st = TimeProfile::Step { t_on: 1.0 };
        assert_eq!(st.factor(0.999), 0.0);
        assert_eq!(st.factor(1.0), 1.0);
        assert_eq!(st.factor(2.0), 1.0);
    }

    #[test]
    fn separable_evaluation() {
        let v = VectorLoad {
            value: [2.0, -1.0],
            profile: TimeProfile::Ramp,
        };
        assert_eq!(v.at(0.5), [1.0, -0.5]);
        let s = ScalarLoad {
            value: 3.0,
            profile: TimeProfile::Step { t_on: 0.0 },
        };
        assert_eq!(s.at(0.0), 3.0);
    }

    #[test]
    fn serde_round_trip() {
        let spec = LoadSpec {
            body_force: Some(VectorLoad {
                value: [0.0, -9.81],
                profile: TimeProfile::Constant,
            }),
            mass_source: Some(ScalarLoad {
                value: 1.0,
                profile: TimeProfile::Sinusoid { omega: 3.0 },
            }),
            darcy_force: None,
        };
        let json = serde_json::to_string(&spec).unwrap();
        let back: LoadSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
