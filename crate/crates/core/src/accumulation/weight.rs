use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::AccumulationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFamily {
    Bell,
    Gamma,
}

impl WeightFamily {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bell" => Some(WeightFamily::Bell),
            "gamma" => Some(WeightFamily::Gamma),
            _ => None,
        }
    }
}

impl fmt::Display for WeightFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightFamily::Bell => "bell",
            WeightFamily::Gamma => "gamma",
        })
    }
}

/// Weight curve peaking at the response midpoint.
///
/// The gamma curve is evaluated at `x = (t_resp_mid - t) + mode` with
/// `mode = (alpha - 1) * beta`, so the peak sits on the response midpoint,
/// earlier packets fall on the heavy right tail and later packets on the
/// steep left flank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WeightFunction {
    Bell { sigma_ms: f64 },
    Gamma { alpha: f64, beta_ms: f64 },
}

impl WeightFunction {
    pub fn bell(sigma_ms: f64) -> Result<Self, AccumulationError> {
        let w = WeightFunction::Bell { sigma_ms };
        w.validate()?;
        Ok(w)
    }

    pub fn gamma(alpha: f64, beta_ms: f64) -> Result<Self, AccumulationError> {
        let w = WeightFunction::Gamma { alpha, beta_ms };
        w.validate()?;
        Ok(w)
    }

    pub fn family(&self) -> WeightFamily {
        match self {
            WeightFunction::Bell { .. } => WeightFamily::Bell,
            WeightFunction::Gamma { .. } => WeightFamily::Gamma,
        }
    }

    pub fn validate(&self) -> Result<(), AccumulationError> {
        match *self {
            WeightFunction::Bell { sigma_ms } if !(sigma_ms > 0.0 && sigma_ms.is_finite()) => {
                Err(AccumulationError::Param(format!("bell sigma must be > 0, got {sigma_ms}")))
            }
            WeightFunction::Gamma { alpha, beta_ms }
                if !(alpha > 1.0 && alpha.is_finite() && beta_ms > 0.0 && beta_ms.is_finite()) =>
            {
                Err(AccumulationError::Param(format!(
                    "gamma needs alpha > 1 and beta > 0, got alpha={alpha} beta={beta_ms}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Standard deviation of the curve in ms; the normalizer in the score.
    pub fn spread_ms(&self) -> f64 {
        match *self {
            WeightFunction::Bell { sigma_ms } => sigma_ms,
            WeightFunction::Gamma { alpha, beta_ms } => alpha.sqrt() * beta_ms,
        }
    }

    /// Default successor window: three standard deviations.
    pub fn successor_window_ms(&self) -> f64 {
        3.0 * self.spread_ms()
    }

    /// Density (1/ms) at a packet midpoint `t_mid_ms`.
    pub fn eval(&self, t_mid_ms: f64, t_resp_mid_ms: f64) -> f64 {
        match *self {
            WeightFunction::Bell { sigma_ms } => {
                let z = (t_mid_ms - t_resp_mid_ms) / sigma_ms;
                (-0.5 * z * z).exp() / (sigma_ms * (2.0 * PI).sqrt())
            }
            WeightFunction::Gamma { alpha, beta_ms } => {
                let x = (t_resp_mid_ms - t_mid_ms) + (alpha - 1.0) * beta_ms;
                if x <= 0.0 {
                    return 0.0;
                }
                ((alpha - 1.0) * x.ln() - x / beta_ms - alpha * beta_ms.ln() - ln_gamma(alpha)).exp()
            }
        }
    }

    /// Checked variant of [`eval`](Self::eval).
    pub fn try_eval(&self, t_mid_ms: f64, t_resp_mid_ms: f64) -> Result<f64, AccumulationError> {
        self.validate()?;
        Ok(self.eval(t_mid_ms, t_resp_mid_ms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{Continuous, Gamma, Normal};

    #[test]
    fn bell_peak_and_tail() {
        let w = WeightFunction::bell(1.0).unwrap();
        assert!((w.eval(10.0, 10.0) - 0.3989423).abs() < 5e-8);
        assert!((w.eval(10.0 - 1.75, 10.0) - 0.0862773).abs() < 5e-8);
    }

    #[test]
    fn bell_matches_normal_pdf() {
        let w = WeightFunction::bell(0.7).unwrap();
        let n = Normal::new(3.0, 0.7).unwrap();
        for t in [-1.0, 0.5, 2.9, 3.0, 4.4, 9.0] {
            assert!((w.eval(t, 3.0) - n.pdf(t)).abs() < 1e-14);
        }
    }

    #[test]
    fn gamma_matches_pdf_under_mapping() {
        let (alpha, beta) = (3.0, 0.5);
        let w = WeightFunction::gamma(alpha, beta).unwrap();
        // statrs uses rate = 1 / scale
        let g = Gamma::new(alpha, 1.0 / beta).unwrap();
        let mode = (alpha - 1.0) * beta;
        for t in [5.0, 7.5, 9.9, 10.0, 10.5, 10.99] {
            let x = 10.0 - t + mode;
            assert!((w.eval(t, 10.0) - g.pdf(x)).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn gamma_zero_outside_support() {
        let w = WeightFunction::gamma(2.0, 1.0).unwrap();
        // x <= 0 once the packet is more than one mode past the response
        assert_eq!(w.eval(10.0 + 1.0 + 5.0, 10.0), 0.0);
        assert_eq!(w.eval(11.0, 10.0), 0.0);
    }

    #[test]
    fn both_families_peak_at_response_midpoint() {
        for w in [WeightFunction::bell(0.8).unwrap(), WeightFunction::gamma(2.5, 0.6).unwrap()] {
            let peak = w.eval(4.0, 4.0);
            for dt in [0.01, 0.1, 0.5, 2.0] {
                assert!(w.eval(4.0 - dt, 4.0) < peak);
                assert!(w.eval(4.0 + dt, 4.0) < peak);
            }
        }
    }

    #[test]
    fn gamma_prefers_predecessors() {
        for (alpha, beta) in [(1.5, 0.25), (2.0, 0.5), (3.0, 1.0), (4.0, 2.0)] {
            let w = WeightFunction::gamma(alpha, beta).unwrap();
            for i in 1..=300 {
                let d = 3.0 * beta * i as f64 / 300.0;
                assert!(w.eval(-d, 0.0) >= w.eval(d, 0.0), "alpha={alpha} beta={beta} d={d}");
            }
        }
    }

    #[test]
    fn bad_params_rejected() {
        assert!(WeightFunction::bell(0.0).is_err());
        assert!(WeightFunction::gamma(1.0, 1.0).is_err());
        assert!(WeightFunction::gamma(2.0, -1.0).is_err());
        let raw = WeightFunction::Bell { sigma_ms: -1.0 };
        assert!(raw.try_eval(0.0, 0.0).is_err());
    }
}
