//! Scalar and elementwise proximal operators for L1, L0, and the combined
//! L1+L0 penalty.
//!
//! The combined operator solves `min_x 1/2 (x-y)^2 + delta*|x| + eta*|x|_0`
//! in closed form: it hard-thresholds at `delta + sqrt(2*eta)` and shrinks
//! surviving values by `delta`. [`oracle`] holds an independent grid-search
//! minimizer used by the test suites and the `prox-check` CLI command.

use crate::error::{Error, Result};

/// Weights of the combined penalty `delta*|x| + eta*|x|_0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxParams {
    delta: f64,
    eta: f64,
}

impl ProxParams {
    /// Rejects negative or non-finite weights.
    pub fn new(delta: f64, eta: f64) -> Result<Self> {
        if !delta.is_finite() || delta < 0.0 {
            return Err(Error::InvalidParam(format!("delta must be >= 0, got {delta}")));
        }
        if !eta.is_finite() || eta < 0.0 {
            return Err(Error::InvalidParam(format!("eta must be >= 0, got {eta}")));
        }
        Ok(Self { delta, eta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Sparsity threshold `delta + sqrt(2*eta)`: inputs at or below it (in
    /// magnitude) map to zero.
    pub fn threshold(&self) -> f64 {
        self.delta + (2.0 * self.eta).sqrt()
    }

    /// Penalized quadratic `E(x) = 1/2 (x-y)^2 + delta*|x| + eta*|x|_0`
    /// whose global minimizer [`combined_prox`] returns.
    pub fn energy(&self, x: f64, y: f64) -> f64 {
        let l0 = if x != 0.0 { self.eta } else { 0.0 };
        0.5 * (x - y) * (x - y) + self.delta * x.abs() + l0
    }
}

/// `sign(y) * max(|y| - theta, 0)`, the L1 proximal map.
pub fn soft_threshold(y: f64, theta: f64) -> f64 {
    debug_assert!(theta >= 0.0);
    let shrunk = y.abs() - theta;
    if shrunk > 0.0 {
        y.signum() * shrunk
    } else {
        0.0
    }
}

/// Closed-form minimizer of `1/2 (x-y)^2 + delta*|x| + eta*|x|_0`.
///
/// Exact threshold ties (`|y| == delta + sqrt(2*eta)`) return 0: both
/// candidates attain the same objective and the zero branch keeps the
/// result maximally sparse.
pub fn combined_prox(y: f64, params: &ProxParams) -> f64 {
    let t = params.threshold();
    if y > t {
        y - params.delta
    } else if y < -t {
        y + params.delta
    } else {
        0.0
    }
}

/// Elementwise [`combined_prox`].
pub fn combined_prox_vec(y: &[f64], params: &ProxParams) -> Vec<f64> {
    y.iter().map(|&v| combined_prox(v, params)).collect()
}

pub mod oracle {
    //! Brute-force grid minimizer of the combined penalty, independent of the
    //! closed-form branch logic it is used to check.

    use super::*;

    /// Grid point minimizing `E(x) = 1/2 (x-y)^2 + delta*|x| + eta*|x|_0`
    /// over `{lo + i*step} ∪ {0}`. Requires `lo < hi`, `step > 0`, and
    /// `0 ∈ [lo, hi]` so that the exactly-sparse candidate is always
    /// considered. Ties break toward smaller `|x|`, then toward 0 (the zero
    /// candidate is seeded first, so it wins all ties at equal magnitude).
    pub fn prox_oracle(y: f64, params: &ProxParams, lo: f64, hi: f64, step: f64) -> Result<f64> {
        if !(lo < hi) {
            return Err(Error::InvalidParam(format!("oracle grid empty: lo={lo} hi={hi}")));
        }
        if !(step > 0.0) {
            return Err(Error::InvalidParam(format!("oracle step must be > 0, got {step}")));
        }
        if lo > 0.0 || hi < 0.0 {
            return Err(Error::InvalidParam(
                "oracle grid must contain x = 0".to_string(),
            ));
        }

        let mut best_x = 0.0_f64;
        let mut best_e = params.energy(0.0, y);
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        for i in 0..=n {
            let x = lo + i as f64 * step;
            let e = params.energy(x, y);
            if e < best_e || (e == best_e && x.abs() < best_x.abs()) {
                best_e = e;
                best_x = x;
            }
        }
        Ok(best_x)
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::prox_oracle;
    use super::*;
    use proptest::prelude::*;

    fn p(delta: f64, eta: f64) -> ProxParams {
        ProxParams::new(delta, eta).unwrap()
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(0.0, 1.0), 0.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        // frozen from the grid oracle: min 1/2 (x-3)^2 + |x| over [-10,10]
        let oracle = prox_oracle(3.0, &p(1.0, 0.0), -10.0, 10.0, 1e-4).unwrap();
        assert!((oracle - 2.0).abs() < 1e-4);
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
    }

    #[test]
    fn combined_prox_examples() {
        let params = p(0.5, 0.5); // threshold 0.5 + 1 = 1.5
        assert_eq!(combined_prox(0.0, &params), 0.0);
        assert_eq!(combined_prox(2.0, &params), 1.5);
        assert_eq!(combined_prox(1.4, &params), 0.0);
        assert_eq!(combined_prox(-2.0, &params), -1.5);
        // pure L0: hard threshold at sqrt(2*0.5) = 1
        assert_eq!(combined_prox(1.2, &p(0.0, 0.5)), 1.2);
    }

    #[test]
    fn combined_prox_examples_match_grid_oracle() {
        let params = p(0.5, 0.5);
        for y in [2.0, 1.4, -2.0] {
            let x = combined_prox(y, &params);
            let o = prox_oracle(y, &params, -10.0, 10.0, 1e-4).unwrap();
            assert!(
                (params.energy(x, y) - params.energy(o, y)).abs() <= 1e-6,
                "y={y}: prox {x} vs oracle {o}"
            );
        }
        let pure_l0 = p(0.0, 0.5);
        let o = prox_oracle(1.2, &pure_l0, -10.0, 10.0, 1e-4).unwrap();
        assert!((o - 1.2).abs() < 1e-4);
    }

    #[test]
    fn combined_prox_vec_examples() {
        let params = p(0.5, 0.5);
        assert_eq!(combined_prox_vec(&[0.0, 0.0, 0.0], &params), vec![0.0; 3]);
        assert_eq!(
            combined_prox_vec(&[2.0, 1.4, -2.0], &params),
            vec![1.5, 0.0, -1.5]
        );
        // eta = 0 reduces to soft thresholding
        let l1 = p(1.0, 0.0);
        assert_eq!(combined_prox_vec(&[3.0, -0.5], &l1), vec![2.0, 0.0]);
    }

    #[test]
    fn oracle_trivial_and_boundary() {
        assert_eq!(
            prox_oracle(0.0, &p(1.0, 1.0), -10.0, 10.0, 1e-4).unwrap(),
            0.0
        );
        // exactly at the threshold both branches tie; the energy gap between
        // whatever the oracle picks and either candidate stays below 1e-6
        let params = p(0.5, 0.5);
        let y = 1.5 + 1e-3;
        let o = prox_oracle(y, &params, -10.0, 10.0, 1e-4).unwrap();
        let near_active = (o - (1.0 + 1e-3)).abs() <= 1e-4;
        let near_zero = o == 0.0;
        assert!(near_active || near_zero, "oracle returned {o}");
        assert!(
            (params.energy(o, y) - params.energy(combined_prox(y, &params), y)).abs() <= 1e-6
        );
    }

    #[test]
    fn oracle_rejects_bad_grid() {
        assert!(prox_oracle(1.0, &p(0.1, 0.1), 1.0, -1.0, 0.1).is_err());
        assert!(prox_oracle(1.0, &p(0.1, 0.1), -1.0, 1.0, 0.0).is_err());
        assert!(prox_oracle(1.0, &p(0.1, 0.1), 0.5, 1.0, 0.1).is_err());
    }

    #[test]
    fn params_rejects_invalid() {
        assert!(ProxParams::new(-0.1, 0.0).is_err());
        assert!(ProxParams::new(0.0, -0.1).is_err());
        assert!(ProxParams::new(f64::NAN, 0.0).is_err());
        assert!(ProxParams::new(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn threshold_exceeds_pure_thresholds_along_tradeoff_sweep() {
        // delta = 1 - eta swept on a 0.01 grid over (0, 0.8]: the combined
        // threshold must exceed both the pure-L1 threshold (delta) and the
        // pure-L0 threshold (sqrt(2*eta)) pointwise.
        for i in 1..=80 {
            let delta = i as f64 * 0.01;
            let eta = 1.0 - delta;
            let t = p(delta, eta).threshold();
            assert!(t > delta, "delta={delta}: {t} <= L1 threshold");
            assert!(t > (2.0 * eta).sqrt(), "delta={delta}: {t} <= L0 threshold");
        }
    }

    proptest! {
        #[test]
        fn oracle_agreement_on_random_inputs(
            y in -5.0..5.0f64,
            delta in 0.0..2.0f64,
            eta in 0.0..2.0f64,
        ) {
            let params = p(delta, eta);
            let x = combined_prox(y, &params);
            let o = prox_oracle(y, &params, -6.0, 6.0, 1e-3).unwrap();
            // compare objective values, not argmins, to absorb threshold ties
            prop_assert!(params.energy(x, y) <= params.energy(o, y) + 1e-6);
        }

        #[test]
        fn shrinkage_and_sign(y in -10.0..10.0f64, delta in 0.0..2.0f64, eta in 0.0..2.0f64) {
            let x = combined_prox(y, &p(delta, eta));
            prop_assert!(x.abs() <= y.abs() + 1e-15);
            prop_assert!(x == 0.0 || x.signum() == y.signum());
        }

        #[test]
        fn odd_symmetry(y in -10.0..10.0f64, delta in 0.0..2.0f64, eta in 0.0..2.0f64) {
            let params = p(delta, eta);
            prop_assert_eq!(combined_prox(-y, &params), -combined_prox(y, &params));
        }

        #[test]
        fn eta_zero_reduces_to_soft_threshold(y in -10.0..10.0f64, delta in 0.0..2.0f64) {
            let params = p(delta, 0.0);
            prop_assert_eq!(combined_prox(y, &params), soft_threshold(y, delta));
        }

        #[test]
        fn delta_zero_is_hard_threshold(y in -10.0..10.0f64, eta in 0.0..2.0f64) {
            let params = p(0.0, eta);
            let expected = if y.abs() > (2.0 * eta).sqrt() { y } else { 0.0 };
            prop_assert_eq!(combined_prox(y, &params), expected);
        }
    }
}
