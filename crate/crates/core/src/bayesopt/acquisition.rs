use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::gp::SurrogateState;
use super::space::DIM;

/// Closed-form expected improvement below `best` for a Gaussian belief with
/// the given mean and standard deviation. Degenerates to `max(best - mean, 0)`
/// when the deviation is zero.
pub fn improvement_closed_form(mean: f64, std_dev: f64, best: f64) -> f64 {
    let gain = best - mean;
    if !(std_dev > 0.0) {
        return gain.max(0.0);
    }
    let z = gain / std_dev;
    let standard = Normal::standard();
    (gain * standard.cdf(z) + std_dev * standard.pdf(z)).max(0.0)
}

/// Expected improvement of the surrogate at `x`; `best` is on the
/// standardized scale (see [`SurrogateState::best_standardized`]).
pub fn expected_improvement(state: &SurrogateState, x: &[f64; DIM], best: f64) -> f64 {
    let (mean, variance) = state.posterior(x);
    improvement_closed_form(mean, variance.sqrt(), best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_deviation_cases() {
        assert_eq!(improvement_closed_form(1.0, 0.0, 1.0), 0.0);
        assert_eq!(improvement_closed_form(0.0, 0.0, 1.0), 1.0);
        assert_eq!(improvement_closed_form(2.0, 0.0, 1.0), 0.0);
    }

    #[test]
    fn unit_deviation_at_best_is_standard_density_at_zero() {
        let ei = improvement_closed_form(0.0, 1.0, 0.0);
        assert!((ei - 0.398_942_280_401_432_7).abs() < 1e-12, "{ei}");
    }

    #[test]
    fn vanishes_as_deviation_shrinks_above_best() {
        let mut last = f64::INFINITY;
        for k in 0..12 {
            let sd = 10f64.powi(-k);
            let ei = improvement_closed_form(0.5, sd, 0.0);
            assert!(ei >= 0.0 && ei <= last);
            last = ei;
        }
        assert!(last < 1e-12);
    }
}
