//! Monte-Carlo against closed-form quantities for strategies away from the optimum.

use merton_core::closed_form::{growth_exponent, optimal_strategy, proportional_objective, value};
use merton_core::sde::{simulate, Scheme, SimConfig};
use merton_core::stats::SampleStats;
use merton_core::verify::{mc_objective, objective_config};
use merton_core::{ModelSpec, ProportionalStrategy};
use proptest::prelude::*;

fn set_b() -> ModelSpec {
    ModelSpec::from_parts(0.02, 0.07, 0.25, 0.03, 2.0).unwrap()
}

#[test]
fn growth_exponent_matches_simulated_moment() {
    // E[X_t^(1-gamma)] = x^(1-gamma) e^(g t) for a proportional strategy
    let spec = set_b();
    for (k, th) in [(0.02, 0.8), (0.05, -0.5), (0.1, 1.5)] {
        let s = ProportionalStrategy::new(k, th).unwrap();
        let cfg = SimConfig::new(5.0, 10, 20_000, 3, Scheme::ExactLog).unwrap();
        let b = simulate(&spec, &s, 1.0, &cfg).unwrap();
        let powers: Vec<f64> = b.terminal_wealth().iter().map(|x| 1.0 / x).collect();
        let st = SampleStats::from_slice(&powers);
        let want = (growth_exponent(&spec, &s) * 5.0).exp();
        assert!(
            (st.mean - want).abs() <= 3.0 * st.stderr,
            "{k} {th}: {} vs {want}",
            st.mean
        );
    }
}

#[test]
fn suboptimal_objectives_are_recovered() {
    let spec = set_b();
    for (k, th) in [(0.02, 0.3), (0.045, 0.6)] {
        let s = ProportionalStrategy::new(k, th).unwrap();
        let cfg = objective_config(&spec, &s, 4000, 5).unwrap();
        let mc = mc_objective(&spec, &s, 2.0, &cfg).unwrap();
        let j = proportional_objective(&spec, &s, 2.0).unwrap();
        assert!(mc.contains(j), "{k} {th}: {} vs {j}", mc.estimate);
        assert!(j < value(&spec, 2.0).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn no_proportional_strategy_beats_value(
        r in -0.03f64..0.08, lam in -0.8f64..0.8, sigma in 0.05f64..0.5, gamma in 1.2f64..6.0,
        extra in 0.01f64..0.5, kf in 0.05f64..0.95, dth in -1.0f64..1.0, x in 0.05f64..20.0,
    ) {
        let rho = (1.0 - gamma) * (r + lam * lam / (2.0 * gamma)) + extra;
        let spec = ModelSpec::from_parts(r, r + lam * sigma, sigma, rho, gamma).unwrap();
        let opt = optimal_strategy(&spec).unwrap();
        let s = ProportionalStrategy::new(kf * spec.kappa_max().unwrap(), opt.theta + dth).unwrap();
        let j = proportional_objective(&spec, &s, x).unwrap();
        let v = value(&spec, x).unwrap();
        prop_assert!(j <= v + 1e-12 * v.abs());
    }
}
