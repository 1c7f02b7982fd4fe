//! Synthetic base signals for fixtures and benchmarks.

use rand_distr::{Distribution, StandardNormal};

use crate::numerics::rng::{domain, stream};
use crate::numerics::Real;

use super::TimeSeries;

/// `amplitude * sin(2*pi*t / period) + N(0, noise^2)`, deterministic per seed.
pub fn sine_series(
    name: &str,
    n: usize,
    period: Real,
    amplitude: Real,
    noise: Real,
    seed: u64,
) -> TimeSeries {
    let mut rng = stream(seed, domain::SYNTH, 0, 0);
    let tau = 2.0 * std::f64::consts::PI as Real;
    let values = (0..n)
        .map(|t| {
            let clean = amplitude * (tau * t as Real / period).sin();
            let eps: Real = StandardNormal.sample(&mut rng);
            clean + noise * eps
        })
        .collect();
    TimeSeries::univariate(name, values, None).expect("n > 0")
}

pub fn flat_series(name: &str, n: usize, value: Real) -> TimeSeries {
    TimeSeries::univariate(name, vec![value; n], None).expect("n > 0")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_is_deterministic_and_periodic() {
        let a = sine_series("a", 200, 50.0, 1.0, 0.0, 3);
        let b = sine_series("a", 200, 50.0, 1.0, 0.0, 3);
        assert_eq!(a, b);
        assert!((a.values()[0] - a.values()[50]).abs() < 1e-9);
        assert!((a.values()[12] - a.values()[62]).abs() < 1e-9);
    }

    #[test]
    fn noise_changes_with_seed() {
        let a = sine_series("a", 100, 50.0, 1.0, 0.1, 1);
        let b = sine_series("a", 100, 50.0, 1.0, 0.1, 2);
        assert_ne!(a.values(), b.values());
    }
}
