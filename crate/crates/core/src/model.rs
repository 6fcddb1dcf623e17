//! Market and preference parameters, and the finiteness condition of the
//! high risk aversion regime.
//!
//! Everything downstream reads its parameters from a [`ModelSpec`]. The risk
//! premium is derived at construction and never accepted from input.

use serde::{Deserialize, Serialize};

use crate::error::{MertonError, Result};

/// Black-Scholes market: riskless rate `r`, risky drift `mu`, volatility `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMarket")]
pub struct MarketParams {
    pub r: f64,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Deserialize)]
struct RawMarket {
    r: f64,
    mu: f64,
    sigma: f64,
}

impl TryFrom<RawMarket> for MarketParams {
    type Error = MertonError;

    fn try_from(raw: RawMarket) -> Result<Self> {
        MarketParams::new(raw.r, raw.mu, raw.sigma)
    }
}

impl MarketParams {
    pub fn new(r: f64, mu: f64, sigma: f64) -> Result<Self> {
        if !r.is_finite() || !mu.is_finite() {
            return Err(MertonError::InvalidMarket(format!(
                "r and mu must be finite (r={r}, mu={mu})"
            )));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(MertonError::InvalidMarket(format!(
                "sigma must be positive and finite, got {sigma}"
            )));
        }
        Ok(Self { r, mu, sigma })
    }
}

/// CRRA preferences with discount rate `rho` (any sign) and risk aversion `gamma > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPreferences")]
pub struct Preferences {
    pub rho: f64,
    pub gamma: f64,
}

#[derive(Deserialize)]
struct RawPreferences {
    rho: f64,
    gamma: f64,
}

impl TryFrom<RawPreferences> for Preferences {
    type Error = MertonError;

    fn try_from(raw: RawPreferences) -> Result<Self> {
        Preferences::new(raw.rho, raw.gamma)
    }
}

impl Preferences {
    pub fn new(rho: f64, gamma: f64) -> Result<Self> {
        if !rho.is_finite() {
            return Err(MertonError::InvalidPreferences(format!(
                "rho must be finite, got {rho}"
            )));
        }
        // gamma = 1 is log utility, which needs a different functional form.
        if !(gamma.is_finite() && gamma > 1.0) {
            return Err(MertonError::InvalidPreferences(format!(
                "gamma must be finite and > 1, got {gamma}"
            )));
        }
        Ok(Self { rho, gamma })
    }
}

/// Risk premium `(mu - r) / sigma`.
pub fn risk_premium(market: &MarketParams) -> Result<f64> {
    if !(market.sigma > 0.0) {
        return Err(MertonError::InvalidMarket(format!(
            "sigma must be positive, got {}",
            market.sigma
        )));
    }
    Ok((market.mu - market.r) / market.sigma)
}

/// Full model: market, preferences and the derived risk premium.
///
/// Serializes as the flat object `{"r", "mu", "sigma", "rho", "gamma"}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct ModelSpec {
    pub market: MarketParams,
    pub prefs: Preferences,
    lambda: f64,
}

/// Wire form of a [`ModelSpec`]. Unknown keys (including a stray `lambda`)
/// are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub r: f64,
    pub mu: f64,
    pub sigma: f64,
    pub rho: f64,
    pub gamma: f64,
}

impl TryFrom<ModelFile> for ModelSpec {
    type Error = MertonError;

    fn try_from(f: ModelFile) -> Result<Self> {
        ModelSpec::from_parts(f.r, f.mu, f.sigma, f.rho, f.gamma)
    }
}

impl From<ModelSpec> for ModelFile {
    fn from(s: ModelSpec) -> Self {
        ModelFile {
            r: s.market.r,
            mu: s.market.mu,
            sigma: s.market.sigma,
            rho: s.prefs.rho,
            gamma: s.prefs.gamma,
        }
    }
}

impl ModelSpec {
    pub fn new(market: MarketParams, prefs: Preferences) -> Result<Self> {
        let lambda = risk_premium(&market)?;
        Ok(Self {
            market,
            prefs,
            lambda,
        })
    }

    pub fn from_parts(r: f64, mu: f64, sigma: f64, rho: f64, gamma: f64) -> Result<Self> {
        Self::new(
            MarketParams::new(r, mu, sigma)?,
            Preferences::new(rho, gamma)?,
        )
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn r(&self) -> f64 {
        self.market.r
    }

    pub fn sigma(&self) -> f64 {
        self.market.sigma
    }

    pub fn rho(&self) -> f64 {
        self.prefs.rho
    }

    pub fn gamma(&self) -> f64 {
        self.prefs.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `r + lambda^2 / (2 gamma)`, the certainty-equivalent return of the
    /// Merton portfolio.
    pub(crate) fn merton_return(&self) -> f64 {
        self.r() + self.lambda * self.lambda / (2.0 * self.gamma())
    }

    /// Finiteness margin `rho - (1 - gamma)(r + lambda^2 / (2 gamma))`.
    pub fn margin(&self) -> f64 {
        self.rho() - (1.0 - self.gamma()) * self.merton_return()
    }

    pub fn is_well_posed(&self) -> bool {
        self.margin() > 0.0
    }

    pub(crate) fn require_well_posed(&self) -> Result<()> {
        if self.is_well_posed() {
            Ok(())
        } else {
            Err(MertonError::IllPosed {
                margin: self.margin(),
            })
        }
    }

    /// Supremum of consumption fractions that keep the objective finite when
    /// the risky fraction is the Merton fraction: `rho/(gamma-1) + r + lambda^2/(2 gamma)`.
    ///
    /// Equal to `margin / (gamma - 1)`.
    pub fn kappa_max(&self) -> Result<f64> {
        self.require_well_posed()?;
        Ok(self.rho() / (self.gamma() - 1.0) + self.merton_return())
    }

    /// Short hex digest of the canonical JSON form, embedded in reports.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical =
            serde_json::to_string(&ModelFile::from(*self)).expect("model file serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(r: f64, mu: f64, sigma: f64, rho: f64, gamma: f64) -> ModelSpec {
        ModelSpec::from_parts(r, mu, sigma, rho, gamma).unwrap()
    }

    #[test]
    fn risk_premium_examples() {
        let m = MarketParams::new(0.0, 0.0, 0.2).unwrap();
        assert_eq!(risk_premium(&m).unwrap(), 0.0);
        let m = MarketParams::new(0.02, 0.07, 0.25).unwrap();
        assert!((risk_premium(&m).unwrap() - 0.2).abs() < 1e-15);
        let m = MarketParams::new(0.05, 0.05, 1.0).unwrap();
        assert_eq!(risk_premium(&m).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(MarketParams::new(0.0, 0.0, 0.0).is_err());
        assert!(MarketParams::new(0.0, 0.0, -0.1).is_err());
        assert!(MarketParams::new(f64::NAN, 0.0, 0.1).is_err());
        assert!(Preferences::new(0.1, 1.0).is_err());
        assert!(Preferences::new(0.1, 0.5).is_err());
        assert!(Preferences::new(f64::INFINITY, 2.0).is_err());
        assert!(Preferences::new(-0.3, 2.0).is_ok());
    }

    #[test]
    fn margin_examples() {
        let a = spec(0.0, 0.0, 0.2, 1.0, 2.0);
        assert_eq!(a.margin(), 1.0);
        assert!(a.is_well_posed());

        let b = spec(0.02, 0.07, 0.25, 0.03, 2.0);
        assert!((b.margin() - 0.06).abs() < 1e-15);
        assert!(b.is_well_posed());

        // lambda = 0 by setting mu = r
        let c = spec(-0.1, -0.1, 0.2, -0.2, 2.0);
        assert!((c.margin() + 0.3).abs() < 1e-15);
        assert!(!c.is_well_posed());
    }

    #[test]
    fn kappa_max_examples() {
        let a = spec(0.0, 0.0, 0.2, 1.0, 2.0);
        assert_eq!(a.kappa_max().unwrap(), 1.0);
        let b = spec(0.02, 0.07, 0.25, 0.03, 2.0);
        assert!((b.kappa_max().unwrap() - 0.06).abs() < 1e-15);
        let c = spec(-0.1, -0.1, 0.2, -0.2, 2.0);
        assert!(matches!(c.kappa_max(), Err(MertonError::IllPosed { .. })));

        // margin -> 0+ drives kappa_max -> 0+
        let tiny = spec(0.0, 0.0, 0.2, 1e-9, 3.0);
        let k = tiny.kappa_max().unwrap();
        assert!(k > 0.0 && k < 1e-9);
    }

    #[test]
    fn json_round_trip_ignores_lambda() {
        let s = ModelSpec::from_json(
            r#"{"r":0.02,"mu":0.07,"sigma":0.25,"rho":0.03,"gamma":2.0,"lambda":99.0}"#,
        )
        .unwrap();
        assert!((s.lambda() - 0.2).abs() < 1e-15);
        let text = serde_json::to_string(&s).unwrap();
        assert!(!text.contains("lambda"));
        assert_eq!(ModelSpec::from_json(&text).unwrap(), s);
    }

    #[test]
    fn json_rejects_invalid_values() {
        assert!(ModelSpec::from_json(r#"{"r":0,"mu":0,"sigma":0,"rho":1,"gamma":2}"#).is_err());
        assert!(ModelSpec::from_json(r#"{"r":0,"mu":0,"sigma":0.2,"rho":1,"gamma":1}"#).is_err());
        assert!(ModelSpec::from_json(r#"{"r":0,"mu":0,"sigma":0.2,"rho":1}"#).is_err());
    }

    proptest! {
        #[test]
        fn kappa_max_times_gamma_minus_one_is_margin(
            r in -0.1f64..0.1, mu in -0.2f64..0.3, sigma in 0.05f64..0.8,
            gamma in 1.05f64..8.0, extra in 1e-4f64..1.0,
        ) {
            let base = spec(r, mu, sigma, 0.0, gamma);
            let rho = (1.0 - gamma) * base.merton_return() + extra;
            let s = spec(r, mu, sigma, rho, gamma);
            let lhs = s.kappa_max().unwrap() * (gamma - 1.0);
            prop_assert!((lhs - s.margin()).abs() <= 1e-14 * s.margin().abs().max(1.0) * 10.0);
        }

        #[test]
        fn well_posedness_depends_only_on_lambda(
            r in -0.1f64..0.1, lambda in -1.0f64..1.0, s1 in 0.05f64..1.0, s2 in 0.05f64..1.0,
            rho in -0.5f64..0.5, gamma in 1.05f64..6.0,
        ) {
            let a = spec(r, r + lambda * s1, s1, rho, gamma);
            let b = spec(r, r + lambda * s2, s2, rho, gamma);
            prop_assume!((a.margin()).abs() > 1e-9);
            prop_assert_eq!(a.is_well_posed(), b.is_well_posed());
        }

        #[test]
        fn margin_is_monotone(
            r in -0.1f64..0.1, lambda in 0.0f64..1.0, rho in -0.5f64..0.5,
            gamma in 1.05f64..6.0, bump in 1e-3f64..0.1,
        ) {
            let m = |r: f64, lam: f64, rho: f64| spec(r, r + lam * 0.2, 0.2, rho, gamma).margin();
            let base = m(r, lambda, rho);
            prop_assert!(m(r, lambda, rho + bump) > base);
            prop_assert!(m(r + bump, lambda, rho) > base);
            prop_assert!(m(r, lambda + bump, rho) > base);
        }
    }
}
