use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

/// Environment variable that multiplies every tolerance.
pub const TOL_SCALE_ENV: &str = "MAGNOMECH_TOL_SCALE";

/// Thresholds used to turn residuals into verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Premise checks such as `(dγ + B)|_D ≈ 0`.
    pub hypothesis: f64,
    /// Hamilton-Jacobi equation defects.
    pub equation: f64,
    /// Membership of points in `M` and of vectors in `K`.
    pub membership: f64,
    /// Smallest admissible singular value of `ω^B` restricted to `K`.
    pub sigma_min: f64,
    /// `ε*ω^B = ω^B` residual.
    pub symplectic: f64,
    /// Derivatives with respect to cyclic coordinates.
    pub invariance: f64,
    /// Relatedness of full and reduced fields.
    pub relatedness: f64,
    /// Separation factor between the zero and nonzero status bands.
    pub band_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            hypothesis: 1e-8,
            equation: 1e-7,
            membership: 1e-8,
            sigma_min: 1e-8,
            symplectic: 1e-8,
            invariance: 1e-10,
            relatedness: 1e-8,
            band_factor: 10.0,
        }
    }
}

impl Tolerances {
    /// Multiply every threshold (not the band factor) by `s`.
    pub fn scaled(self, s: f64) -> Self {
        Tolerances {
            hypothesis: self.hypothesis * s,
            equation: self.equation * s,
            membership: self.membership * s,
            sigma_min: self.sigma_min * s,
            symplectic: self.symplectic * s,
            invariance: self.invariance * s,
            relatedness: self.relatedness * s,
            band_factor: self.band_factor,
        }
    }

    /// Apply the scale from `MAGNOMECH_TOL_SCALE`, if set to a positive number.
    pub fn with_env_scale(self) -> Self {
        match env_scale() {
            Some(s) => self.scaled(s),
            None => self,
        }
    }
}

pub fn env_scale() -> Option<f64> {
    std::env::var(TOL_SCALE_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<f64>().ok())
        .filter(|s| s.is_finite() && *s > 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_leaves_band_factor_alone() {
        let t = Tolerances::default().scaled(10.0);
        assert_eq!(t.equation, 1e-6);
        assert_eq!(t.band_factor, 10.0);
    }

    #[test]
    fn partial_overrides_deserialize() {
        let t: Tolerances = serde_json::from_str(r#"{"equation": 1e-6}"#).unwrap();
        assert_eq!(t.equation, 1e-6);
        assert_eq!(t.hypothesis, 1e-8);
    }
}
