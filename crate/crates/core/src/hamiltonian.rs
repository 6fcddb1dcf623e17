//! Current-value Hamiltonian of the wealth problem, its maximizers and the
//! stationary HJB residual.

use crate::error::{MertonError, Result};
use crate::model::ModelSpec;

/// Candidate first and second derivatives of a value function at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivs {
    /// Marginal value `p`.
    pub p: f64,
    /// Curvature `P`.
    pub pp: f64,
}

impl Derivs {
    pub fn new(p: f64, pp: f64) -> Self {
        Self { p, pp }
    }
}

fn crra_utility(spec: &ModelSpec, c: f64) -> f64 {
    if c == 0.0 {
        return f64::NEG_INFINITY;
    }
    let g = spec.gamma();
    ((1.0 - g) * c.ln()).exp() / (1.0 - g)
}

/// `r x p + pi sigma lambda p + pi^2 sigma^2 P / 2 - c p + c^(1-gamma)/(1-gamma)`.
///
/// Zero consumption gives `-inf`.
pub fn hcv(spec: &ModelSpec, x: f64, d: Derivs, c: f64, pi: f64) -> f64 {
    let s = spec.sigma();
    spec.r() * x * d.p + pi * s * spec.lambda() * d.p + 0.5 * pi * pi * s * s * d.pp - c * d.p
        + crra_utility(spec, c)
}

/// Unique maximizer `(p^(-1/gamma), -lambda p / (sigma P))`, valid for `p > 0`, `P < 0`.
pub fn maximizers(spec: &ModelSpec, _x: f64, d: Derivs) -> Result<(f64, f64)> {
    if !(d.p > 0.0 && d.pp < 0.0) {
        return Err(MertonError::InvalidDerivs(format!(
            "maximizers need p > 0 and P < 0, got p={}, P={}",
            d.p, d.pp
        )));
    }
    let c = (-d.p.ln() / spec.gamma()).exp();
    let pi = -spec.lambda() * d.p / (spec.sigma() * d.pp);
    Ok((c, pi))
}

/// Supremum of [`hcv`] over `c >= 0` and real `pi`.
///
/// For `p > 0, P < 0` this is `r x p - (lambda^2/2) p^2/P + gamma/(1-gamma) p^((gamma-1)/gamma)`.
/// For `p = 0, P <= 0` the supremum is `0`: consumption utility tends to zero
/// as `c -> inf` and the portfolio term is non-positive. Every other sign
/// pattern is unbounded above.
pub fn h_max(spec: &ModelSpec, x: f64, d: Derivs) -> Result<f64> {
    if d.p > 0.0 && d.pp < 0.0 {
        let g = spec.gamma();
        let lam = spec.lambda();
        let consumption = g / (1.0 - g) * ((g - 1.0) / g * d.p.ln()).exp();
        return Ok(spec.r() * x * d.p - 0.5 * lam * lam * d.p * d.p / d.pp + consumption);
    }
    if d.p == 0.0 && d.pp <= 0.0 {
        return Ok(0.0);
    }
    Err(MertonError::UnboundedHamiltonian { p: d.p, pp: d.pp })
}

/// `rho v - H_max(x, p, P)`.
pub fn hjb_residual(spec: &ModelSpec, x: f64, v: f64, p: f64, pp: f64) -> Result<f64> {
    Ok(spec.rho() * v - h_max(spec, x, Derivs::new(p, pp))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{merton_constant, value, value_d1, value_d2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set_a() -> ModelSpec {
        ModelSpec::from_parts(0.0, 0.0, 0.2, 1.0, 2.0).unwrap()
    }

    fn set_b() -> ModelSpec {
        ModelSpec::from_parts(0.02, 0.07, 0.25, 0.03, 2.0).unwrap()
    }

    #[test]
    fn hcv_examples() {
        let a = set_a();
        assert_eq!(hcv(&a, 1.0, Derivs::new(1.0, -1.0), 1.0, 0.0), -2.0);
        let b = set_b();
        assert_eq!(
            hcv(&b, 1.0, Derivs::new(0.0, 0.0), 1.0, 0.0),
            1.0 / (1.0 - 2.0)
        );
        assert_eq!(
            hcv(&b, 1.0, Derivs::new(1.0, -1.0), 0.0, 0.3),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn maximizer_examples() {
        let b = set_b();
        assert_eq!(maximizers(&b, 1.0, Derivs::new(1.0, -1.0)).unwrap().0, 1.0);
        let (c, _) = maximizers(&set_a(), 1.0, Derivs::new(4.0, -1.0)).unwrap();
        assert!((c - 0.5).abs() < 1e-15);
        let a = merton_constant(&b).unwrap();
        let (_, pi) = maximizers(&b, 1.0, Derivs::new(a, -2.0 * a)).unwrap();
        assert!((pi - 0.4).abs() < 1e-14);
        assert!(maximizers(&b, 1.0, Derivs::new(0.0, -1.0)).is_err());
        assert!(maximizers(&b, 1.0, Derivs::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn h_max_examples() {
        assert!((h_max(&set_a(), 1.0, Derivs::new(4.0, -8.0)).unwrap() + 4.0).abs() < 1e-15);
        assert_eq!(h_max(&set_b(), 1.0, Derivs::new(0.0, -1.0)).unwrap(), 0.0);
        assert_eq!(h_max(&set_b(), 1.0, Derivs::new(0.0, 0.0)).unwrap(), 0.0);

        // equals rho V(1) = -0.03 a, which is what makes the residual vanish
        let b = set_b();
        let a = merton_constant(&b).unwrap();
        let h = h_max(&b, 1.0, Derivs::new(a, -2.0 * a)).unwrap();
        assert!((h + 0.03 * a).abs() < 1e-12 * a);

        for d in [
            Derivs::new(-1.0, -1.0),
            Derivs::new(1.0, 0.0),
            Derivs::new(1.0, 2.0),
            Derivs::new(0.0, 1.0),
        ] {
            assert!(matches!(
                h_max(&b, 1.0, d),
                Err(MertonError::UnboundedHamiltonian { .. })
            ));
        }
    }

    #[test]
    fn residual_examples() {
        let a = set_a();
        assert_eq!(hjb_residual(&a, 1.0, -4.0, 4.0, -8.0).unwrap(), 0.0);
        assert_eq!(hjb_residual(&set_b(), 3.0, 0.0, 0.0, 0.0).unwrap(), 0.0);
        for spec in [set_a(), set_b()] {
            for x in [1e-3, 0.37, 1.0, 12.0, 1e3] {
                let v = value(&spec, x).unwrap();
                let res = hjb_residual(
                    &spec,
                    x,
                    v,
                    value_d1(&spec, x).unwrap(),
                    value_d2(&spec, x).unwrap(),
                )
                .unwrap();
                assert!(res.abs() <= 1e-9 * (spec.rho() * v).abs(), "x={x}: {res}");
            }
        }
    }

    #[test]
    fn h_max_dominates_random_controls() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for spec in [set_a(), set_b()] {
            for _ in 0..10_000 {
                let x = 10f64.powf(rng.random_range(-2.0..2.0));
                let d = Derivs::new(
                    10f64.powf(rng.random_range(-3.0..3.0)),
                    -10f64.powf(rng.random_range(-3.0..3.0)),
                );
                let h = h_max(&spec, x, d).unwrap();
                let (c, pi) = maximizers(&spec, x, d).unwrap();
                let at_max = hcv(&spec, x, d, c, pi);
                let scale = h.abs().max(at_max.abs()).max(1e-300);
                assert!((h - at_max).abs() <= 1e-11 * scale, "{h} vs {at_max}");
            }
            for _ in 0..100 {
                let x = 10f64.powf(rng.random_range(-2.0..2.0));
                let d = Derivs::new(
                    10f64.powf(rng.random_range(-2.0..2.0)),
                    -10f64.powf(rng.random_range(-2.0..2.0)),
                );
                let h = h_max(&spec, x, d).unwrap();
                for _ in 0..100 {
                    let c = 10f64.powf(rng.random_range(-3.0..3.0));
                    let pi = rng.random_range(-50.0..50.0);
                    assert!(hcv(&spec, x, d, c, pi) <= h + 1e-12 * h.abs().max(1.0));
                }
            }
        }
    }
}
